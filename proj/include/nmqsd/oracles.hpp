// oracles.hpp — brute-force reference solvers
//   * system + discrete bosonic modes at T = 0, exact unitary evolution in the
//     excitation-number subspace
//   * Lindblad master equation (Markov limit)
//   * pseudomode: one damped mode reproducing the OU correlation
#pragma once

#include "nmqsd/correlation.hpp"
#include "nmqsd/ensemble.hpp"
#include "nmqsd/models.hpp"

#include <vector>

namespace nmqsd {

struct BathModes {
    std::vector<BathMode> modes;
    int max_excitations{-1};  // -1: the largest excitation in the initial state
};

// Basis of the excitation subspace: system index and mode occupations, in
// lexicographic order of (system index, occupations).
struct ExcitationSubspace {
    std::vector<int> system;
    std::vector<std::vector<int>> occupations;
    std::size_t size() const { return system.size(); }
};

ExcitationSubspace enumerate_subspace(const ModelSpec& model, int n_modes, int max_excitations);

// Largest excitation number with non-zero weight in rho0.
int max_excitation(const ModelSpec& model, const Mat& rho0);

DensityMatrixSeries solve_discrete_modes(const ModelSpec& model, const BathModes& bath, const Mat& rho0,
                                         const TimeGrid& grid);

// Exact linear-QSD trajectory for the mode-sum noise with mode amplitudes zk:
// the Bargmann projection psi_t(z^*) = sum_n prod_k (zk^*)^{n_k} e^{i w_k n_k t}
// / sqrt(n_k!) <n|Psi(t)> of the total state, per grid point.
std::vector<Vec> bargmann_trajectory(const ModelSpec& model, const std::vector<BathMode>& modes,
                                     const Vec& psi0, const std::vector<cplx>& zk, const TimeGrid& grid);

struct LindbladSpec {
    Mat h;
    Mat l;
    double rate{1.0};
};

DensityMatrixSeries solve_lindblad(const LindbladSpec& spec, const Mat& rho0, const TimeGrid& grid);

// System plus one mode (frequency 0, coupling sqrt(gamma/2), decay 2 gamma),
// mode truncated at n_ph_max photons (-1: the largest initial excitation).
// With `check_truncation` the run is repeated at n_ph_max + 1 and a shift
// above 1e-4 in trace distance throws TruncationError.
DensityMatrixSeries solve_pseudomode_ou(const ModelSpec& model, double gamma, int n_ph_max, const Mat& rho0,
                                        const TimeGrid& grid, bool check_truncation = true);

// Markov rate 2 Re int_0^inf alpha(tau) dtau for an OU kernel (= 1 for any gamma).
double markov_rate_ou(double gamma);

} // namespace nmqsd
