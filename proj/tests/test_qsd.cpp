#include "nmqsd/ensemble.hpp"
#include "nmqsd/observables.hpp"
#include "nmqsd/oracles.hpp"
#include "nmqsd/qsd.hpp"

#include <doctest.h>

using namespace nmqsd;

namespace {

double bargmann_error(int n, double dt) {
    const ModelSpec m = build_nqubit_model(n, 0.7);
    const std::vector<BathMode> modes{{0.6, 0.3}, {cplx(0, 0.5), -0.8}};
    const TimeGrid g = TimeGrid::covering(dt, 1.5);
    const std::vector<cplx> zk{cplx(0.4, -0.2), cplx(-0.3, 0.5)};
    const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::discrete_modes(modes), g);
    const QsdIntegrator integ(m, kf);
    Vec psi0 = Vec::Zero(m.dim());
    psi0(m.dim() - 1) = 1.0;
    TrajectoryOptions o;
    o.mode = QsdMode::Linear;
    const auto res = integ.run(psi0, discrete_mode_path(modes, g, zk), o);
    const auto exact = bargmann_trajectory(m, modes, psi0, zk, g);
    double err = 0.0;
    for (int i = 0; i < g.size(); ++i) err = std::max(err, (res.psi[i] - exact[i]).norm());
    return err;
}

} // namespace

TEST_CASE("linear trajectory equals the Bargmann projection of the exact state") {
    for (int n : {1, 2}) {
        const double coarse = bargmann_error(n, 0.05);
        const double fine = bargmann_error(n, 0.025);
        CHECK(fine < 2e-4);
        CHECK(coarse / fine > 3.5);
    }
}

TEST_CASE("linear mode, omega = 0: excited population |c(t)|^2") {
    // c'' + g c' + (g/2) c = 0 for the OU kernel; frozen values for g = 1
    const ModelSpec m = build_nqubit_model(1, 0.0);
    const TimeGrid g = TimeGrid::covering(0.01, 2.0);
    const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::ornstein_uhlenbeck(1.0), g);
    const QsdIntegrator integ(m, kf);
    Vec psi0 = Vec::Zero(2);
    psi0(1) = 1.0;
    EnsembleConfig ec;
    ec.mode = QsdMode::Linear;
    ec.n_traj = 20;
    const auto s = run_ensemble(integ, psi0 * psi0.adjoint(), ec);
    CHECK(std::abs(s.rho[100](1, 1).real() - 0.6774393168245546) < 1e-4);
    CHECK(std::abs(s.rho[200](1, 1).real() - 0.25839530804238947) < 1e-4);
    CHECK(s.se_re[200](1, 1) == 0.0);
}

TEST_CASE("nonlinear trajectories stay normalized") {
    const ModelSpec m = build_nqubit_model(2, 1.0);
    const TimeGrid g = TimeGrid::covering(0.01, 2.0);
    const auto corr = CorrelationFunction::ornstein_uhlenbeck(0.5);
    const KernelField kf = propagate_kernels(basis_for(m), corr, g);
    const QsdIntegrator integ(m, kf);
    const Vec psi0 = Vec::Constant(4, 0.5);
    const auto res = integ.run(psi0, sample_path(corr, g, RngStream(1, 0)), {}, 1, 0);
    for (const auto& v : res.psi) CHECK(std::abs(v.norm() - 1.0) < 1e-12);
    CHECK(res.max_norm_drift < 1e-3);
    CHECK(res.ldag_mean.size() == static_cast<std::size_t>(g.size()));
}

TEST_CASE("closed-system limit: psi(t) = exp(-iHt) psi(0), second order in dt") {
    const ModelSpec m = build_angular_model(1.0, 0.8);
    const std::vector<BathMode> none{{0.0, 1.0}};
    const Vec psi0 = Vec::Constant(3, 1.0 / std::sqrt(3.0));
    const Eigen::VectorXcd d = m.h_sys.diagonal();
    Vec exact = psi0;
    for (int k = 0; k < 3; ++k) exact(k) *= std::exp(-kI * d(k) * 2.0);
    for (QsdMode mode : {QsdMode::Linear, QsdMode::Nonlinear}) {
        double err[2];
        for (int r = 0; r < 2; ++r) {
            const TimeGrid g = TimeGrid::covering(0.02 / (1 << r), 2.0);
            const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::discrete_modes(none), g);
            const QsdIntegrator integ(m, kf);
            TrajectoryOptions o;
            o.mode = mode;
            const auto res = integ.run(psi0, sample_path(CorrelationFunction::discrete_modes(none), g, RngStream(1, 0)), o);
            err[r] = (res.psi.back() - exact).norm();
            CHECK(std::abs(expectation(res.psi.back(), m.h_sys) - expectation(psi0, m.h_sys)) < 1e-12);
        }
        CHECK(err[1] < 1e-4);
        CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.05));
    }
}

TEST_CASE("nonlinear: single steps reproduce the whole trajectory") {
    const ModelSpec m = build_angular_model(1.5, 1.0);
    const auto corr = CorrelationFunction::discrete_modes({{0.6, 0.3}, {cplx(0.4, 0.1), -1.1}});
    const TimeGrid g = TimeGrid::covering(0.05, 1.0);
    const KernelField kf = propagate_kernels(basis_for(m), corr, g);
    const QsdIntegrator integ(m, kf);
    const Vec psi0 = Vec::Constant(4, 0.5);
    for (bool shifted : {true, false}) {
        TrajectoryOptions o;
        o.obar_on_shifted_noise = shifted;
        const NoisePath path = sample_path(corr, g, RngStream(9, 4));
        const auto res = integ.run(psi0, path, o);
        NoisePath p = path;
        std::vector<cplx> ldag{std::conj(expectation(psi0, m.l_op))};
        Vec psi = psi0;
        for (int i = 0; i < g.n_steps; ++i) {
            double nb = 0.0;
            psi = integ.step_nonlinear(psi, i, p, ldag, nb, shifted);
            CHECK((psi - res.psi[i + 1]).norm() < 1e-12);
        }
    }
}

TEST_CASE("nonlinear ensemble with a noise-dependent Obar matches the exact bath") {
    // spin 3/2 keeps O-operator terms up to third order in the noise; Obar has
    // to see the past noise shifted by the whole <L^dagger> history
    const ModelSpec m = build_angular_model(1.5, 1.0);
    const std::vector<BathMode> modes{{0.6, 0.3}, {cplx(0.4, 0.1), -1.1}, {0.3, 2.0}};
    const TimeGrid g = TimeGrid::covering(0.05, 3.0);
    const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::discrete_modes(modes), g);
    const QsdIntegrator integ(m, kf);
    const Mat rho0 = Vec::Constant(4, 0.5) * Vec::Constant(4, 0.5).adjoint();
    EnsembleConfig ec;
    ec.n_traj = 2000;
    ec.seed = 31;
    const auto q = run_ensemble(integ, rho0, ec);
    const auto exact = solve_discrete_modes(m, BathModes{modes}, rho0, g);
    std::vector<double> td;
    max_trace_distance(q, exact, &td);
    const auto err = mc_error(q);
    for (int i = 0; i < g.size(); ++i) CHECK(td[i] < std::max(0.03, 3.0 * err[i]));
}
