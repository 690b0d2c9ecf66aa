// correlation.hpp — bath correlation functions, time grids and complex
// Gaussian noise paths z_t with M[z_t] = M[z_t z_s] = 0, M[z_t^* z_s] = alpha(t,s).
#pragma once

#include "nmqsd/linalg.hpp"
#include "nmqsd/rng.hpp"

#include <string>
#include <variant>
#include <vector>

namespace nmqsd {

struct OrnsteinUhlenbeck {
    double gamma{1.0};
};

struct BathMode {
    cplx g;
    double omega{0.0};
};

struct DiscreteModes {
    std::vector<BathMode> modes;
};

// One term of alpha(t,s) = sum_r weight_r exp(-rate_r (t - s)), valid for t >= s.
struct ExponentialTerm {
    cplx weight;
    cplx rate;
};

class CorrelationFunction {
public:
    using Kind = std::variant<OrnsteinUhlenbeck, DiscreteModes>;

    static CorrelationFunction ornstein_uhlenbeck(double gamma);
    static CorrelationFunction discrete_modes(std::vector<BathMode> modes);

    cplx operator()(double t, double s) const;

    const Kind& kind() const { return kind_; }
    bool is_ou() const { return std::holds_alternative<OrnsteinUhlenbeck>(kind_); }
    double gamma() const;                          // OU only
    const std::vector<BathMode>& modes() const;    // DiscreteModes only

    // Both kinds are finite sums of exponentials for t >= s.
    const std::vector<ExponentialTerm>& exponential_terms() const { return terms_; }

    std::string describe() const;

private:
    explicit CorrelationFunction(Kind kind);
    Kind kind_;
    std::vector<ExponentialTerm> terms_;
};

inline cplx alpha(const CorrelationFunction& corr, double t, double s) { return corr(t, s); }

struct TimeGrid {
    double dt{0.01};
    int n_steps{0};

    double t(int i) const { return i * dt; }
    int size() const { return n_steps + 1; }
    double t_end() const { return n_steps * dt; }

    // Grid with spacing dt covering [0, t_end]; t_end must be a multiple of
    // dt to within 1e-9 relative.
    static TimeGrid covering(double dt, double t_end);
};

struct NoisePath {
    TimeGrid grid;
    std::vector<cplx> z;
    // int_0^t alpha^*(t,s) <L^dagger>_s ds, filled causally by the nonlinear
    // integrator; empty for linear runs.
    std::vector<cplx> shift;

    cplx shifted(int i) const { return shift.empty() ? z[i] : z[i] + shift[i]; }
};

// Stationary complex OU process as two independent real AR(1) components,
// each with variance gamma/4 and decay gamma. Exact at any dt.
NoisePath sample_ou_path(double gamma, const TimeGrid& grid, const RngStream& stream);

// z_t = -i sum_k g_k conj(z_k) exp(i omega_k t) with z_k standard complex Gaussian.
NoisePath sample_discrete_mode_path(const std::vector<BathMode>& modes, const TimeGrid& grid,
                                    const RngStream& stream);

// Same map for given mode amplitudes z_k.
NoisePath discrete_mode_path(const std::vector<BathMode>& modes, const TimeGrid& grid,
                             const std::vector<cplx>& zk);

// Factorized covariance C_ij = M[z_i z_j^*] = alpha(t_j, t_i) for a generic
// Gaussian path generator. Built once per (corr, grid), reused for every path.
class CovarianceFactor {
public:
    CovarianceFactor(const CorrelationFunction& corr, const TimeGrid& grid);
    NoisePath sample(const RngStream& stream) const;
    const Mat& factor() const { return factor_; }

private:
    TimeGrid grid_;
    Mat factor_;
};

NoisePath sample_gaussian_path_cholesky(const CorrelationFunction& corr, const TimeGrid& grid,
                                        const RngStream& stream);

// Default generator for a correlation kind: AR(1) for OU, mode sum for
// discrete modes.
NoisePath sample_path(const CorrelationFunction& corr, const TimeGrid& grid,
                      const RngStream& stream);

// ------------------------------------------------------------- moment checks

enum class NoiseGenerator { OrnsteinUhlenbeck, DiscreteModes, Cholesky };

std::string to_string(NoiseGenerator g);

struct MomentCheck {
    std::string name;      // e.g. "Re M[z*_t z_s] (t=0.5,s=0.2)"
    double value{0.0};
    double expected{0.0};
    double std_error{0.0};
    bool pass{false};
};

// Draws n_paths paths with streams (seed, 0..n_paths-1) and compares the
// empirical moments M[z_t], M[z_t z_s], M[z_t^* z_s] with 0, 0, alpha(t,s)
// at the given grid-index pairs. Each real/imaginary component must lie
// within `sigmas` standard errors of its target.
std::vector<MomentCheck> noise_moment_checks(NoiseGenerator generator,
                                             const CorrelationFunction& corr,
                                             const TimeGrid& grid, int n_paths,
                                             std::uint64_t seed,
                                             const std::vector<std::pair<int, int>>& pairs,
                                             double sigmas = 3.0);

} // namespace nmqsd
