#include "nmqsd/ensemble.hpp"
#include "nmqsd/observables.hpp"

#include <doctest.h>

#include <sstream>

using namespace nmqsd;

namespace {

std::string dump(const DensityMatrixSeries& s) {
    std::ostringstream os;
    write_rho_csv(os, s);
    return os.str();
}

} // namespace

TEST_CASE("results do not depend on the worker count") {
    const ModelSpec m = build_nqubit_model(2, 1.0);
    const TimeGrid g = TimeGrid::covering(0.02, 1.0);
    const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::ornstein_uhlenbeck(1.0), g);
    const QsdIntegrator integ(m, kf);
    const Mat rho0 = Mat::Identity(4, 4) / 4.0;
    std::vector<std::string> out;
    for (int threads : {1, 3, 8}) {
        EnsembleConfig ec;
        ec.n_traj = 150;
        ec.seed = 4;
        ec.threads = threads;
        out.push_back(dump(run_ensemble(integ, rho0, ec)));
    }
    CHECK(out[0] == out[1]);
    CHECK(out[0] == out[2]);
}

TEST_CASE("identical trajectories give zero standard error") {
    const ModelSpec m = build_nqubit_model(1, 1.0);
    const TimeGrid g = TimeGrid::covering(0.05, 1.0);
    const auto closed = CorrelationFunction::discrete_modes({{0.0, 1.0}});
    const KernelField kf = propagate_kernels(basis_for(m), closed, g);
    const QsdIntegrator integ(m, kf);
    Vec psi(2);
    psi << 0.6, cplx(0.0, 0.8);
    EnsembleConfig ec;
    ec.n_traj = 37;
    const auto s = run_ensemble(integ, psi * psi.adjoint(), ec);
    for (int t = 0; t < g.size(); ++t) {
        CHECK(s.se_re[t].maxCoeff() == 0.0);
        CHECK(s.se_im[t].maxCoeff() == 0.0);
        CHECK(s.stderr_scale[t] == 0.0);
    }
    CHECK(std::abs(s.rho.back()(0, 0).real() - 0.36) < 1e-12);
}

TEST_CASE("mixed initial states are unravelled by eigenvector sampling") {
    const ModelSpec m = build_nqubit_model(1, 1.0);
    const TimeGrid g = TimeGrid::covering(0.05, 0.5);
    const auto closed = CorrelationFunction::discrete_modes({{0.0, 1.0}});
    const KernelField kf = propagate_kernels(basis_for(m), closed, g);
    const QsdIntegrator integ(m, kf);
    Mat rho0 = Mat::Zero(2, 2);
    rho0(0, 0) = 0.3;
    rho0(1, 1) = 0.7;
    EnsembleConfig ec;
    ec.n_traj = 4000;
    ec.seed = 8;
    const auto s = run_ensemble(integ, rho0, ec);
    CHECK(std::abs(s.rho[0](0, 0).real() - 0.3) < 3.0 * s.se_re[0](0, 0));
    CHECK(s.se_re[0](0, 0) > 0.0);
}

TEST_CASE("linear mode: M[|psi|^2] = 1 within 3 sigma") {
    const ModelSpec m = build_nqubit_model(1, 1.0);
    const TimeGrid g = TimeGrid::covering(0.02, 2.0);
    const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::ornstein_uhlenbeck(1.0), g);
    const QsdIntegrator integ(m, kf);
    const Vec psi = Vec::Constant(2, 1.0 / std::sqrt(2.0));
    EnsembleConfig ec;
    ec.mode = QsdMode::Linear;
    ec.n_traj = 3000;
    ec.seed = 12;
    const auto s = run_ensemble(integ, psi * psi.adjoint(), ec);
    CHECK(std::abs(s.norm2_mean.back() - 1.0) <= 3.0 * s.norm2_stderr.back());
    CHECK(s.norm2_stderr.back() > 0.0);
}
