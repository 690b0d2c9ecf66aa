// qsd.hpp — single QSD trajectories along a noise path
//
// linear:     dpsi/dt = (-iH + L z_t - L^dagger Obar(t,z)) psi
// nonlinear:  dpsi/dt = -iH psi + (L - <L>) zt psi - (L^dagger - <L^dagger>) Obar psi
//                       + <(L^dagger - <L^dagger>) Obar> psi,
//             zt = z_t + int_0^t alpha^*(t,s) <L^dagger>_s ds
// In the nonlinear equation Obar(t) sees the past noise shifted by every
// <L^dagger>_u up to t, not only u <= s:
//             z_s + int_0^t M[z_s z_u^*] <L^dagger>_u du,   s <= t.
// The causal shift alone leaves a bias whenever Obar depends on the noise.
// Heun steps with the noise frozen per substep: the predictor uses z(t_i) and
// Obar(t_i), the corrector z(t_{i+1}) and Obar(t_{i+1}).
#pragma once

#include "nmqsd/kernel_field.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nmqsd {

enum class QsdMode { Linear, Nonlinear };

std::string to_string(QsdMode mode);

// <psi|A|psi> / <psi|psi>
cplx expectation(const Vec& psi, const Mat& a);

struct TrajectoryOptions {
    QsdMode mode{QsdMode::Nonlinear};
    // Nonlinear mode: evaluate every noise integral of Obar on the shifted
    // path as seen from the current time (true) or on the raw path (false).
    bool obar_on_shifted_noise{true};
    bool keep_states{true};
};

struct TrajectoryResult {
    std::vector<Vec> psi;          // per grid point (if kept)
    std::vector<double> norms;     // ||psi(t_i)|| before renormalization
    double max_norm_drift{0.0};    // nonlinear: max_i | ||psi|| - 1 | before renormalization
    std::vector<cplx> ldag_mean;   // nonlinear: <L^dagger>_{t_i}
    NoisePath path;                // with the shift filled in nonlinear mode
};

// Physical-space operators for trajectories, built once per kernel field.
class QsdIntegrator {
public:
    QsdIntegrator(const ModelSpec& model, const KernelField& kernels);

    const KernelField& kernels() const { return *kernels_; }
    int dim() const { return static_cast<int>(h_.rows()); }

    // Obar(t_i) and L^dagger Obar(t_i) on the physical space from order-wise
    // coefficient vectors.
    void obar_operators(const std::vector<Vec>& coeffs, Mat& obar, Mat& ldag_obar) const;

    // One Heun step of the linear equation from t_i to t_{i+1}.
    Vec step_linear(const Vec& psi, int i, std::span<const cplx> z) const;

    // One Heun step of the nonlinear equation from t_i to t_{i+1}; reads
    // path.z and the shift through t_i, writes the shift at t_{i+1}, appends
    // <L^dagger> to the series, renormalizes and returns the norm before
    // renormalization in `norm_before`.
    Vec step_nonlinear(const Vec& psi, int i, NoisePath& path, std::vector<cplx>& ldag_mean,
                       double& norm_before, bool obar_on_shifted_noise = true) const;

    // Whole trajectory. Throws TrajectoryDiverged(t, seed, index) on a
    // non-finite state.
    TrajectoryResult run(const Vec& psi0, NoisePath path, const TrajectoryOptions& opts,
                         std::uint64_t seed = 0, std::uint64_t index = 0) const;

    // Right-hand sides for a frozen noise value and Obar.
    Vec rhs_linear(const Vec& psi, cplx z, const Mat& obar, const Mat& ldag_obar) const;
    Vec rhs_nonlinear(const Vec& psi, cplx zt, const Mat& obar, const Mat& ldag_obar) const;

private:
    // Shift pieces: alpha^*(t,s) = sum_r conj(w_r) exp(-conj(rate_r)(t-s)).
    struct ShiftState {
        std::vector<cplx> acc;  // sum_{s<i} w'_s exp(-conj(rate)(t_i - t_s)) x_s
    };
    cplx shift_at(const ShiftState& st, cplx x_endpoint) const;
    void shift_advance(ShiftState& st, int i, cplx x_i) const;
    // out[q], q < i: z_q + causal[q] + int_{t_q}^{t_i} alpha(u, t_q) x_u du,
    // with x_i = x_end (trapezoid rule).
    void shifted_history(std::span<const cplx> z, std::span<const cplx> causal, std::span<const cplx> x, int i,
                         cplx x_end, std::vector<cplx>& out) const;

    const KernelField* kernels_;
    Mat h_, l_, ldag_, gen0_;
    std::vector<std::vector<Mat>> ops_;       // compressed O_j^(k)
    std::vector<std::vector<Mat>> ldag_ops_;  // compressed L^dagger O_j^(k)
    std::vector<ExponentialTerm> terms_;
    std::vector<cplx> decay_;                 // exp(-conj(rate) dt)
    std::vector<cplx> back_decay_;            // exp(-rate dt)
};

} // namespace nmqsd
