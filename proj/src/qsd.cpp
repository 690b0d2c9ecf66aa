#include "nmqsd/qsd.hpp"

#include "nmqsd/errors.hpp"

#include <cmath>

namespace nmqsd {

std::string to_string(QsdMode mode) { return mode == QsdMode::Linear ? "linear" : "nonlinear"; }

cplx expectation(const Vec& psi, const Mat& a) {
    return psi.dot(a * psi) / psi.squaredNorm();
}

QsdIntegrator::QsdIntegrator(const ModelSpec& model, const KernelField& kernels) : kernels_(&kernels) {
    const auto& alg = kernels.basis().algebra;
    if (static_cast<int>(alg.physical.size()) != model.dim()) {
        throw InvalidModel("kernel basis does not belong to this model");
    }
    h_ = model.h_sys;
    l_ = model.l_op;
    ldag_ = l_.adjoint();
    gen0_ = -kI * h_;
    const Mat ldag_alg = alg.l.adjoint();
    for (int k = 0; k <= kernels.k_trunc(); ++k) {
        std::vector<Mat> o, lo;
        for (const auto& op : kernels.basis().orders[k]) {
            o.push_back(alg.compress(op));
            lo.push_back(alg.compress(ldag_alg * op));
        }
        ops_.push_back(std::move(o));
        ldag_ops_.push_back(std::move(lo));
    }
    terms_ = kernels.correlation().exponential_terms();
    for (const auto& term : terms_) {
        decay_.push_back(std::exp(-std::conj(term.rate) * kernels.grid().dt));
        back_decay_.push_back(std::exp(-term.rate * kernels.grid().dt));
    }
}

void QsdIntegrator::obar_operators(const std::vector<Vec>& coeffs, Mat& obar, Mat& ldag_obar) const {
    obar = Mat::Zero(dim(), dim());
    ldag_obar = Mat::Zero(dim(), dim());
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        for (Eigen::Index j = 0; j < coeffs[k].size(); ++j) {
            obar += coeffs[k](j) * ops_[k][j];
            ldag_obar += coeffs[k](j) * ldag_ops_[k][j];
        }
    }
}

Vec QsdIntegrator::rhs_linear(const Vec& psi, cplx z, const Mat& /*obar*/, const Mat& ldag_obar) const {
    return gen0_ * psi + z * (l_ * psi) - ldag_obar * psi;
}

Vec QsdIntegrator::rhs_nonlinear(const Vec& psi, cplx zt, const Mat& obar, const Mat& ldag_obar) const {
    const double n2 = psi.squaredNorm();
    const Vec lpsi = l_ * psi;
    const Vec opsi = obar * psi;
    const Vec lopsi = ldag_obar * psi;
    const cplx e_l = psi.dot(lpsi) / n2;
    const cplx e_ldag = std::conj(e_l);
    const cplx e_o = psi.dot(opsi) / n2;
    const cplx e_lo = psi.dot(lopsi) / n2;
    return gen0_ * psi + zt * (lpsi - e_l * psi) - (lopsi - e_ldag * opsi) + (e_lo - e_ldag * e_o) * psi;
}

Vec QsdIntegrator::step_linear(const Vec& psi, int i, std::span<const cplx> z) const {
    const double dt = kernels_->grid().dt;
    Mat o0, lo0, o1, lo1;
    obar_operators(kernels_->obar_coefficients(i, z), o0, lo0);
    obar_operators(kernels_->obar_coefficients(i + 1, z), o1, lo1);
    const Vec k1 = rhs_linear(psi, z[i], o0, lo0);
    const Vec pred = psi + dt * k1;
    const Vec k2 = rhs_linear(pred, z[i + 1], o1, lo1);
    return psi + 0.5 * dt * (k1 + k2);
}

cplx QsdIntegrator::shift_at(const ShiftState& st, cplx x_endpoint) const {
    const double dt = kernels_->grid().dt;
    cplx s{};
    for (std::size_t r = 0; r < terms_.size(); ++r) {
        s += std::conj(terms_[r].weight) * (st.acc[r] + 0.5 * dt * x_endpoint);
    }
    return s;
}

void QsdIntegrator::shift_advance(ShiftState& st, int i, cplx x_i) const {
    const double dt = kernels_->grid().dt;
    const double w = (i == 0) ? 0.5 * dt : dt;
    for (std::size_t r = 0; r < terms_.size(); ++r) st.acc[r] = decay_[r] * (st.acc[r] + w * x_i);
}

void QsdIntegrator::shifted_history(std::span<const cplx> z, std::span<const cplx> causal, std::span<const cplx> x,
                                    int i, cplx x_end, std::vector<cplx>& out) const {
    const double dt = kernels_->grid().dt;
    std::vector<cplx> b(terms_.size(), cplx{});
    cplx x_next = x_end;
    for (int q = i - 1; q >= 0; --q) {
        cplx fut{};
        for (std::size_t r = 0; r < terms_.size(); ++r) {
            b[r] = back_decay_[r] * b[r] + 0.5 * dt * (x[q] + back_decay_[r] * x_next);
            fut += terms_[r].weight * b[r];
        }
        out[q] = z[q] + causal[q] + fut;
        x_next = x[q];
    }
}

Vec QsdIntegrator::step_nonlinear(const Vec& psi, int i, NoisePath& path, std::vector<cplx>& ldag_mean,
                                  double& norm_before, bool obar_on_shifted_noise) const {
    const double dt = kernels_->grid().dt;
    const int n_pts = path.grid.size();
    if (path.shift.size() != static_cast<std::size_t>(n_pts)) path.shift.assign(n_pts, cplx{});
    if (ldag_mean.size() < static_cast<std::size_t>(i) + 1) {
        throw InvalidParameter("step_nonlinear: <L^dagger> series shorter than the step index");
    }

    // rebuild the recursive shift accumulators from the stored series
    ShiftState st{std::vector<cplx>(terms_.size(), cplx{})};
    for (int q = 0; q <= i; ++q) shift_advance(st, q, ldag_mean[q]);

    std::vector<cplx> zt(n_pts);
    for (int q = 0; q <= i; ++q) zt[q] = path.z[q] + path.shift[q];
    std::vector<cplx> zo(obar_on_shifted_noise ? zt : path.z);

    Mat o0, lo0, o1, lo1;
    const bool history = obar_on_shifted_noise && kernels_->k_trunc() > 0;
    if (history) shifted_history(path.z, path.shift, ldag_mean, i, ldag_mean[i], zo);
    obar_operators(kernels_->obar_coefficients(i, zo), o0, lo0);
    const Vec k1 = rhs_nonlinear(psi, zt[i], o0, lo0);
    const Vec pred = psi + dt * k1;
    const cplx x_pred = std::conj(expectation(pred, l_));
    zt[i + 1] = path.z[i + 1] + shift_at(st, x_pred);
    if (obar_on_shifted_noise) zo[i + 1] = zt[i + 1];
    if (history) shifted_history(path.z, path.shift, ldag_mean, i + 1, x_pred, zo);
    obar_operators(kernels_->obar_coefficients(i + 1, zo), o1, lo1);
    const Vec k2 = rhs_nonlinear(pred, zt[i + 1], o1, lo1);
    Vec next = psi + 0.5 * dt * (k1 + k2);
    norm_before = next.norm();
    next /= norm_before;
    const cplx x_next = std::conj(expectation(next, l_));
    path.shift[i + 1] = shift_at(st, x_next);
    ldag_mean.resize(i + 2);
    ldag_mean[i + 1] = x_next;
    return next;
}

TrajectoryResult QsdIntegrator::run(const Vec& psi0, NoisePath path, const TrajectoryOptions& opts,
                                    std::uint64_t seed, std::uint64_t index) const {
    const auto& grid = kernels_->grid();
    if (path.grid.n_steps != grid.n_steps || path.grid.dt != grid.dt) {
        throw InvalidParameter("noise path and kernel field use different grids");
    }
    if (psi0.size() != dim()) throw InvalidState("initial state has the wrong dimension");
    const int n = grid.n_steps;
    const double dt = grid.dt;
    const bool nonlinear = opts.mode == QsdMode::Nonlinear;
    const int kk = kernels_->k_trunc();
    // order 0 carries no noise, so only K >= 1 needs the shifted history
    const bool history = nonlinear && opts.obar_on_shifted_noise && kk > 0;

    TrajectoryResult res;
    Vec psi = psi0;
    if (nonlinear) psi.normalize();
    res.norms.reserve(n + 1);
    res.norms.push_back(psi0.norm());
    if (opts.keep_states) res.psi.push_back(psi);

    // noise values used inside Obar, and the noise multiplying L
    std::vector<cplx> zo(path.z);
    std::vector<cplx> zl(path.z);
    ShiftState st{std::vector<cplx>(terms_.size(), cplx{})};
    if (nonlinear) {
        path.shift.assign(n + 1, cplx{});
        res.ldag_mean.push_back(std::conj(expectation(psi, l_)));
    }

    std::vector<Vec> poly_k;
    std::vector<std::vector<Vec>> poly(kk + 1);
    auto eval_coeffs = [&](int i, cplx x) {
        std::vector<Vec> c(kk + 1);
        for (int k = 0; k <= kk; ++k) {
            c[k] = Vec::Zero(kernels_->count(k));
            cplx xr{1.0, 0.0};
            for (int r = 0; r <= k; ++r) {
                c[k] += xr * poly[k][r];
                xr *= x;
            }
        }
        (void)i;
        return c;
    };
    auto build_poly = [&](int i) {
        for (int k = 0; k <= kk; ++k) kernels_->endpoint_polynomial(k, i, zo, poly[k]);
    };

    Mat o0, lo0, o1, lo1;
    build_poly(0);
    obar_operators(eval_coeffs(0, zo[0]), o0, lo0);

    for (int i = 0; i < n; ++i) {
        if (!history) build_poly(i + 1);
        Vec next;
        if (!nonlinear) {
            const Vec k1 = rhs_linear(psi, zl[i], o0, lo0);
            const Vec pred = psi + dt * k1;
            obar_operators(eval_coeffs(i + 1, zo[i + 1]), o1, lo1);
            const Vec k2 = rhs_linear(pred, zl[i + 1], o1, lo1);
            next = psi + 0.5 * dt * (k1 + k2);
            res.norms.push_back(next.norm());
        } else {
            shift_advance(st, i, res.ldag_mean[i]);
            const Vec k1 = rhs_nonlinear(psi, zl[i], o0, lo0);
            const Vec pred = psi + dt * k1;
            const cplx x_pred = std::conj(expectation(pred, l_));
            const cplx zt_pred = path.z[i + 1] + shift_at(st, x_pred);
            if (history) {
                shifted_history(path.z, path.shift, res.ldag_mean, i + 1, x_pred, zo);
                build_poly(i + 1);
            }
            obar_operators(eval_coeffs(i + 1, opts.obar_on_shifted_noise ? zt_pred : path.z[i + 1]), o1, lo1);
            const Vec k2 = rhs_nonlinear(pred, zt_pred, o1, lo1);
            next = psi + 0.5 * dt * (k1 + k2);
            const double nb = next.norm();
            res.norms.push_back(nb);
            res.max_norm_drift = std::max(res.max_norm_drift, std::abs(nb - 1.0));
            next /= nb;
            const cplx x_next = std::conj(expectation(next, l_));
            res.ldag_mean.push_back(x_next);
            path.shift[i + 1] = shift_at(st, x_next);
            zl[i + 1] = path.z[i + 1] + path.shift[i + 1];
            if (opts.obar_on_shifted_noise) {
                zo[i + 1] = zl[i + 1];
                if (history) {
                    shifted_history(path.z, path.shift, res.ldag_mean, i + 1, x_next, zo);
                    build_poly(i + 1);
                }
            }
        }
        if (!next.allFinite() || next.norm() > 1e100) throw TrajectoryDiverged(grid.t(i + 1), seed, index);
        psi = std::move(next);
        if (opts.keep_states) res.psi.push_back(psi);
        // Obar(t_{i+1}) with the accepted endpoint noise, for the next predictor
        obar_operators(eval_coeffs(i + 1, zo[i + 1]), o0, lo0);
    }
    res.path = std::move(path);
    return res;
}

} // namespace nmqsd
