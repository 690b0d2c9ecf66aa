// observables.hpp — coherences, populations, Uhlmann fidelity, Werner states
#pragma once

#include "nmqsd/ensemble.hpp"

#include <string>
#include <vector>

namespace nmqsd {

struct ObservableSeries {
    std::string name;
    std::vector<double> values;
    std::vector<double> std_error;  // zero for exact series
};

// |rho_ij(t)|, 1-based indices.
ObservableSeries coherence(const DensityMatrixSeries& series, int i, int j);

// rho_ii(t), 1-based.
ObservableSeries population(const DensityMatrixSeries& series, int i);

// F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2. Inputs are clipped
// (eigenvalues >= -1e-8 set to zero) and renormalized; anything worse throws
// InvalidState.
double fidelity(const Mat& rho, const Mat& sigma);

// F(rho_t, reference) per time; the error is the batch-means error over the
// ensemble's trajectory groups.
ObservableSeries fidelity_series(const DensityMatrixSeries& series, const Mat& reference,
                                 const std::string& name = "fidelity");

// (F/8) I_8 + (1-F)|W><W|, |W> = (|100> + |010> + |001>)/sqrt(3).
Mat werner_state(double f);

// Max over time of the trace distance between two series on the same grid.
double max_trace_distance(const DensityMatrixSeries& a, const DensityMatrixSeries& b,
                          std::vector<double>* per_time = nullptr);

// Observable CSV: header t,<name1>,<name2>,...
void write_observables_csv(std::ostream& os, const TimeGrid& grid,
                           const std::vector<ObservableSeries>& columns, bool with_errors = false);

} // namespace nmqsd
