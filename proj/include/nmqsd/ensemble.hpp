// ensemble.hpp — trajectory ensembles and the reconstructed rho_t = M[|psi><psi|]
#pragma once

#include "nmqsd/correlation.hpp"
#include "nmqsd/qsd.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace nmqsd {

struct EnsembleConfig {
    QsdMode mode{QsdMode::Nonlinear};
    int n_traj{1000};
    std::uint64_t seed{1};
    int threads{1};
    bool obar_on_shifted_noise{true};
    // Generator override; by default AR(1) for OU and the mode sum for
    // discrete modes.
    std::optional<NoiseGenerator> generator;
    // Number of contiguous trajectory groups kept for batch-means errors of
    // nonlinear functionals such as fidelity.
    int groups{20};
};

struct DensityMatrixSeries {
    TimeGrid grid;
    QsdMode mode{QsdMode::Nonlinear};
    int n_traj{0};
    std::vector<Mat> rho;                   // Hermitian-symmetrized mean
    std::vector<Eigen::MatrixXd> se_re;     // elementwise standard error of Re rho
    std::vector<Eigen::MatrixXd> se_im;     // ... and of Im rho
    std::vector<double> stderr_scale;       // Frobenius norm of the elementwise error
    std::vector<double> norm2_mean;         // M[||psi||^2]
    std::vector<double> norm2_stderr;
    std::vector<std::vector<Mat>> group_rho;  // [group][t]: group means
    std::vector<int> group_sizes;
    double max_norm_drift{0.0};             // nonlinear: max pre-renormalization drift

    int dim() const { return rho.empty() ? 0 : static_cast<int>(rho.front().rows()); }
};

// Initial pure states are used as given; a mixed rho0 is unravelled by
// drawing one eigenvector per trajectory with probability equal to its
// eigenvalue (InitialState RNG domain).
DensityMatrixSeries run_ensemble(const QsdIntegrator& integrator, const Mat& rho0,
                                 const EnsembleConfig& config);

// Frobenius norm of the elementwise standard error, per time.
std::vector<double> mc_error(const DensityMatrixSeries& series);

// A density-matrix series with no statistical error (oracles), same layout.
DensityMatrixSeries exact_series(const TimeGrid& grid, std::vector<Mat> rho);

// Density-matrix dump: header t,i,j,re,im, row-major, 1-based indices.
void write_rho_csv(std::ostream& os, const DensityMatrixSeries& series);

} // namespace nmqsd
