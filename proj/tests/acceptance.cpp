// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 3 7        run a subset
#include "nmqsd/config.hpp"
#include "nmqsd/csv.hpp"
#include "nmqsd/kernel_field.hpp"
#include "nmqsd/obasis.hpp"
#include "nmqsd/observables.hpp"
#include "nmqsd/oracles.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

using namespace nmqsd;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

class Clock {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_{std::chrono::steady_clock::now()};
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

Mat projector(const Vec& v) { return v * v.adjoint(); }

struct OracleMatch {
    double max_td{0.0};
    double t_at_max{0.0};
    double stderr_at_max{0.0};
};

OracleMatch compare(const DensityMatrixSeries& qsd, const DensityMatrixSeries& ref) {
    std::vector<double> td;
    OracleMatch m;
    m.max_td = max_trace_distance(qsd, ref, &td);
    const auto err = mc_error(qsd);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < td.size(); ++i) {
        if (td[i] > td[arg]) arg = i;
    }
    m.t_at_max = qsd.grid.t(static_cast<int>(arg));
    m.stderr_at_max = err[arg];
    return m;
}

DensityMatrixSeries qsd_ensemble(const ModelSpec& model, const OBasis& basis, const CorrelationFunction& corr,
                                 const TimeGrid& grid, const Mat& rho0, int n_traj, std::uint64_t seed,
                                 QsdMode mode = QsdMode::Nonlinear, int k_trunc = -1) {
    KernelOptions ko;
    ko.k_trunc = k_trunc;
    const KernelField kf = propagate_kernels(basis, corr, grid, ko);
    const QsdIntegrator integ(model, kf);
    EnsembleConfig ec;
    ec.mode = mode;
    ec.n_traj = n_traj;
    ec.seed = seed;
    return run_ensemble(integ, rho0, ec);
}

// ------------------------------------------------------------------ 1

Outcome criterion1() {
    Clock clock;
    const ModelSpec m = build_nqubit_model(1, 1.0);
    const std::vector<BathMode> modes{{0.5, 0.5}, {0.4, -0.3}, {0.3, 1.0}};
    const auto corr = CorrelationFunction::discrete_modes(modes);
    const TimeGrid g = TimeGrid::covering(0.01, 5.0);
    Vec psi(2);
    psi << 1.0, 1.0;
    const Mat rho0 = projector(psi.normalized());
    const auto q = qsd_ensemble(m, basis_for(m), corr, g, rho0, 10000, 7);
    const auto o = solve_discrete_modes(m, BathModes{modes, -1}, rho0, g);
    const OracleMatch r = compare(q, o);
    const double bound = std::max(0.02, 3.0 * r.stderr_at_max);
    return {r.max_td <= bound, "single qubit vs 3 discrete modes, 10^4 trajectories: max TD " + fmt(r.max_td) +
                                   " at t=" + fmt(r.t_at_max) + " <= " + fmt(bound) + " (" + fmt(clock.seconds(), 3) +
                                   " s)"};
}

// ------------------------------------------------------------------ 2

Outcome criterion2() {
    Clock clock;
    bool pass = true;
    std::string detail;
    const TimeGrid g = TimeGrid::covering(0.01, 5.0);
    {
        const ModelSpec m = build_nqubit_model(1, 1.0);
        Vec psi(2);
        psi << 1.0, 1.0;
        const Mat rho0 = projector(psi.normalized());
        for (double gamma : {0.3, 1.0}) {
            const auto corr = CorrelationFunction::ornstein_uhlenbeck(gamma);
            const auto q = qsd_ensemble(m, basis_for(m), corr, g, rho0, 10000, 11);
            const auto o = solve_pseudomode_ou(m, gamma, -1, rho0, g);
            const OracleMatch r = compare(q, o);
            const double bound = std::max(0.02, 3.0 * r.stderr_at_max);
            pass &= r.max_td <= bound;
            detail += "qubit gamma=" + fmt(gamma) + ": " + fmt(r.max_td) + " <= " + fmt(bound) + "; ";
        }
    }
    {
        const ModelSpec m = build_nqubit_model(2, 1.0);
        Vec psi = Vec::Zero(4);
        psi(3) = 1.0;  // |11>
        const Mat rho0 = projector(psi);
        const auto corr = CorrelationFunction::ornstein_uhlenbeck(1.0);
        const auto q = qsd_ensemble(m, basis_for(m), corr, g, rho0, 10000, 13, QsdMode::Nonlinear, 1);
        const auto o = solve_pseudomode_ou(m, 1.0, -1, rho0, g);
        const OracleMatch r = compare(q, o);
        const double bound = std::max(0.03, 3.0 * r.stderr_at_max);
        pass &= r.max_td <= bound;
        detail += "two qubits K=1 gamma=1: " + fmt(r.max_td) + " <= " + fmt(bound);
    }
    return {pass, detail + " (" + fmt(clock.seconds(), 3) + " s)"};
}

// ------------------------------------------------------------------ 3

Outcome criterion3() {
    // Linear mode: the excited amplitude does not depend on the noise, so its
    // population is reproduced without sampling error.
    Clock clock;
    const ModelSpec m = build_nqubit_model(1, 1.0);
    const auto corr = CorrelationFunction::ornstein_uhlenbeck(50.0);
    const TimeGrid g = TimeGrid::covering(0.002, 3.0);
    Vec psi = Vec::Zero(2);
    psi(1) = 1.0;  // excited
    const auto q = qsd_ensemble(m, basis_for(m), corr, g, projector(psi), 200, 5, QsdMode::Linear);
    const double rate = markov_rate_ou(50.0);
    double worst = 0.0, t_worst = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        const double expected = std::exp(-rate * g.t(i));
        const double rel = std::abs(q.rho[i](1, 1).real() - expected) / expected;
        if (rel > worst) {
            worst = rel;
            t_worst = g.t(i);
        }
    }
    return {worst <= 0.05, "gamma=50, excited population vs exp(-t): max relative deviation " + fmt(worst) +
                               " at t=" + fmt(t_worst) + " (limit 0.05, rate " + fmt(rate) + ", " +
                               fmt(clock.seconds(), 3) + " s)"};
}

// ------------------------------------------------------------------ 4

Outcome criterion4() {
    Clock clock;
    bool pass = true;
    std::string detail;
    const auto& table = qubit_count_table();
    for (int n = 1; n <= 7; ++n) {
        const ModelSpec m = build_nqubit_model(n, 1.0);
        const OBasis b = closure_discover(m.algebra, n - 1);
        std::string got;
        for (int k = 0; k < n; ++k) {
            pass &= k <= b.k_max() && b.size(k) == table[n - 1][k];
            got += (k ? "," : "") + std::to_string(k <= b.k_max() ? b.size(k) : -1);
        }
        pass &= b.k_max() == n - 1;
        detail += "N=" + std::to_string(n) + ":(" + got + ") ";
    }
    bool rec = true;
    for (int n = 2; n <= 7; ++n) {
        for (int k = 1; k < n; ++k) rec &= table[n - 1][k] == table[n - 2][k - 1];
        rec &= table[n - 1][0] == (n >= 3 ? table[n - 3][0] : 0) + n;
    }
    pass &= rec && clock.seconds() <= 60.0;
    return {pass, detail + "recurrences " + (rec ? "hold" : "fail") + " (" + fmt(clock.seconds(), 3) + " s)"};
}

// ------------------------------------------------------------------ 5

Outcome criterion5() {
    const ModelSpec m = build_angular_model(2.0, 1.0);
    const OBasis ba = basis_angular(m);
    const OBasis bc = closure_discover(m.algebra, 3);
    const std::vector<int> expected{4, 3, 2, 1};
    bool pass = ba.counts() == expected && bc.counts() == expected;
    double worst = 0.0;
    for (int k = 0; k <= 3 && pass; ++k) {
        worst = std::max(worst, span_residual(ba.orders[k], bc.orders[k], m.algebra));
        worst = std::max(worst, span_residual(bc.orders[k], ba.orders[k], m.algebra));
    }
    pass &= worst <= 1e-9;
    std::string counts;
    for (int c : bc.counts()) counts += (counts.empty() ? "" : ",") + std::to_string(c);
    return {pass, "spin-2 closure counts (" + counts + "), span residual " + fmt(worst, 3) + " (limit 1e-9)"};
}

// ------------------------------------------------------------------ 6

Outcome criterion6() {
    const auto corr = CorrelationFunction::ornstein_uhlenbeck(1.0);
    const std::vector<double> dts{0.02, 0.01, 0.005};
    bool pass = true;
    std::string detail;
    for (const std::string name : {"qubit", "3-cavity", "two-qubit"}) {
        std::vector<double> res;
        for (double dt : dts) {
            const TimeGrid g = TimeGrid::covering(dt, 1.2);
            const int i = static_cast<int>(std::lround(1.0 / dt));
            const int s = static_cast<int>(std::lround(0.5 / dt));
            std::vector<cplx> z(g.size());
            for (int q = 0; q < g.size(); ++q) z[q] = 0.3 * std::exp(cplx(0.0, 0.7 * g.t(q))) + 0.2;
            KernelOptions ko;
            ko.snapshot_steps = {i - 1, i, i + 1};
            KernelField kf;
            if (name == "qubit") {
                kf = propagate_kernels(basis_for(build_nqubit_model(1, 1.0)), corr, g, ko);
            } else if (name == "two-qubit") {
                const ModelSpec m = build_nqubit_model(2, 1.0);
                kf = propagate_kernels(basis_for(m), corr, g, ko);
            } else {
                kf = propagate_ncavity_kernels(build_ncavity_model(3, {0.5, 0.7, 0.9}, {0.5, 0.5, 0.5}, 1), corr, g);
            }
            res.push_back(consistency_residual(kf, z, i, s));
        }
        // least-squares slope of log(res) against log(dt)
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t k = 0; k < dts.size(); ++k) {
            const double x = std::log(dts[k]), y = std::log(res[k]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(dts.size());
        const double order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        pass &= order >= 1.9;
        detail += name + " order " + fmt(order, 3) + " (" + fmt(res[0], 3) + " -> " + fmt(res[2], 3) + "); ";
    }
    return {pass, detail};
}

// ------------------------------------------------------------------ 7

// Largest rise after a local minimum, in units of its standard error.
struct Revival {
    double z{0.0};
    double t_min{0.0};
    double t_peak{0.0};
    double rise{0.0};
};

Revival strongest_revival(const ObservableSeries& c, const TimeGrid& g) {
    Revival best;
    const auto& v = c.values;
    const auto& e = c.std_error;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (!(v[i] <= v[i - 1] && v[i] <= v[i + 1])) continue;
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            const double rise = v[j] - v[i];
            if (rise <= 0.0) continue;
            const double sigma = std::sqrt(e[i] * e[i] + e[j] * e[j]);
            const double z = sigma > 0.0 ? rise / sigma : std::numeric_limits<double>::infinity();
            if (z > best.z) best = {z, g.t(static_cast<int>(i)), g.t(static_cast<int>(j)), rise};
        }
    }
    return best;
}

Outcome criterion7() {
    Clock clock;
    const double omega = 0.3;
    const ModelSpec m = build_angular_model(1.5, omega);
    const OBasis basis = basis_for(m);
    const TimeGrid g = TimeGrid::covering(0.1, 20.0);
    const Mat rho0 = projector(Vec::Constant(4, 0.5));
    bool pass = true;
    std::string detail = "omega=" + fmt(omega) + ": ";
    for (double gamma : {0.3, 3.0}) {
        const auto q = qsd_ensemble(m, basis, CorrelationFunction::ornstein_uhlenbeck(gamma), g, rho0, 1000, 3);
        const Revival r = strongest_revival(coherence(q, 2, 3), g);
        const double lowest = q.rho.back()(3, 3).real();
        const bool revival_ok = gamma < 1.0 ? r.z > 3.0 : r.z <= 3.0;
        pass &= revival_ok && lowest >= 0.9;
        detail += "gamma=" + fmt(gamma) + " |rho_23| rise " + fmt(r.rise, 3) + " (" + fmt(r.z, 3) + " sigma, t " +
                  fmt(r.t_min, 3) + "->" + fmt(r.t_peak, 3) + "), rho_44(20)=" + fmt(lowest, 5) + "; ";
    }
    pass &= clock.seconds() <= 300.0;
    return {pass, detail + "(" + fmt(clock.seconds(), 3) + " s)"};
}

// ------------------------------------------------------------------ 8

int sign(double x) { return (x > 0) - (x < 0); }

Outcome criterion8() {
    Clock clock;
    const double omega = 1.0;
    const ModelSpec m = build_nqubit_model(3, omega);
    const OBasis basis = basis_for(m);
    const TimeGrid g = TimeGrid::covering(0.01, 2.0);
    const int i2 = g.n_steps;
    bool pass = true;
    std::string detail = "omega=" + fmt(omega) + "; ";

    auto run = [&](double gamma, double f, double& value, double& err, double& oracle) {
        const Mat rho0 = werner_state(f);
        const auto q = qsd_ensemble(m, basis, CorrelationFunction::ornstein_uhlenbeck(gamma), g, rho0, 1000, 17,
                                    QsdMode::Nonlinear, 1);
        const auto fs = fidelity_series(q, rho0);
        value = fs.values[i2];
        err = fs.std_error[i2];
        oracle = fidelity(solve_pseudomode_ou(m, gamma, -1, rho0, g).rho[i2], rho0);
    };
    // consecutive entries must differ beyond 3 sigma, in the oracle's direction
    auto ordered = [&](const std::vector<double>& v, const std::vector<double>& e, const std::vector<double>& o,
                       std::string& dirs) {
        bool ok = true;
        for (std::size_t k = 0; k + 1 < v.size(); ++k) {
            const int so = sign(o[k + 1] - o[k]);
            const double d = v[k + 1] - v[k];
            const double sigma = std::sqrt(e[k] * e[k] + e[k + 1] * e[k + 1]);
            ok &= so != 0 && sign(d) == so && std::abs(d) > 3.0 * sigma;
            dirs += so > 0 ? "<" : (so < 0 ? ">" : "=");
        }
        return ok;
    };

    const std::vector<double> gammas{0.3, 1.0, 3.0};
    std::vector<double> v(3), e(3), o(3);
    for (int k = 0; k < 3; ++k) run(gammas[k], 0.0, v[k], e[k], o[k]);
    std::string dirs;
    const bool by_gamma = ordered(v, e, o, dirs);
    detail += "F(t=2) over gamma 0.3,1,3: ";
    for (int k = 0; k < 3; ++k) detail += fmt(v[k]) + "+-" + fmt(e[k], 2) + " (oracle " + fmt(o[k]) + ") ";
    detail += "oracle order " + dirs + (by_gamma ? " matched; " : " NOT matched; ");

    const std::vector<double> fs{0.0, 0.25, 0.5};
    std::vector<double> vf(3), ef(3), of(3);
    vf[0] = v[0];
    ef[0] = e[0];
    of[0] = o[0];
    for (int k = 1; k < 3; ++k) run(0.3, fs[k], vf[k], ef[k], of[k]);
    std::string fdirs;
    const bool by_f = ordered(vf, ef, of, fdirs);
    detail += "gamma=0.3 over Werner F 0,0.25,0.5: ";
    for (int k = 0; k < 3; ++k) detail += fmt(vf[k]) + "+-" + fmt(ef[k], 2) + " (oracle " + fmt(of[k]) + ") ";
    detail += "oracle order " + fdirs + (by_f ? " matched" : " NOT matched");
    pass = by_gamma && by_f;
    return {pass, detail + " (" + fmt(clock.seconds(), 3) + " s)"};
}

// ------------------------------------------------------------------ 9

Outcome criterion9() {
    Clock clock;
    bool pass = true;
    std::string detail;

    // noise moments, every generator
    {
        const auto ou = CorrelationFunction::ornstein_uhlenbeck(1.0);
        const auto dm = CorrelationFunction::discrete_modes({{{0.6, 0.0}, 0.3}, {{0.4, 0.1}, -1.1}, {{0.3, 0.0}, 2.0}});
        const TimeGrid g{0.05, 40};
        const std::vector<std::pair<int, int>> pairs{{0, 0}, {20, 10}, {40, 0}, {40, 40}};
        int total = 0, good = 0;
        for (auto [gen, corr] : {std::pair{NoiseGenerator::OrnsteinUhlenbeck, &ou},
                                 std::pair{NoiseGenerator::Cholesky, &ou},
                                 std::pair{NoiseGenerator::DiscreteModes, &dm},
                                 std::pair{NoiseGenerator::Cholesky, &dm}}) {
            for (const auto& c : noise_moment_checks(gen, *corr, g, 20000, 2024, pairs)) {
                ++total;
                good += c.pass;
            }
        }
        pass &= good == total;
        detail += "noise moments " + std::to_string(good) + "/" + std::to_string(total) + " within 3 sigma; ";
    }

    // linear mode: M[||psi||^2] = 1
    {
        const ModelSpec m = build_nqubit_model(1, 1.0);
        const TimeGrid g = TimeGrid::covering(0.01, 3.0);
        Vec psi(2);
        psi << 1.0, 1.0;
        const auto q = qsd_ensemble(m, basis_for(m), CorrelationFunction::ornstein_uhlenbeck(1.0), g,
                                    projector(psi.normalized()), 4000, 19, QsdMode::Linear);
        double worst = 0.0;
        for (int i = 0; i < g.size(); ++i) {
            const double dev = std::abs(q.norm2_mean[i] - 1.0);
            const double z = q.norm2_stderr[i] > 0.0 ? dev / q.norm2_stderr[i] : (dev > 1e-12 ? 1e300 : 0.0);
            worst = std::max(worst, z);
        }
        pass &= worst <= 3.0;
        detail += "linear M[|psi|^2]-1 max " + fmt(worst, 3) + " sigma; ";
    }

    // determinism across worker counts
    {
        const ModelSpec m = build_nqubit_model(2, 1.0);
        const TimeGrid g = TimeGrid::covering(0.02, 2.0);
        const KernelField kf = propagate_kernels(basis_for(m), CorrelationFunction::ornstein_uhlenbeck(0.5), g);
        const QsdIntegrator integ(m, kf);
        Vec psi = Vec::Zero(4);
        psi(1) = psi(2) = 1.0 / std::sqrt(2.0);
        const Mat rho0 = 0.7 * projector(psi) + 0.3 * projector(Vec::Unit(4, 3));
        std::vector<std::string> dumps;
        for (int threads : {1, 4, 8}) {
            EnsembleConfig ec;
            ec.n_traj = 500;
            ec.seed = 23;
            ec.threads = threads;
            const auto s = run_ensemble(integ, rho0, ec);
            std::ostringstream os;
            write_rho_csv(os, s);
            write_observables_csv(os, g, {population(s, 1), coherence(s, 2, 3), fidelity_series(s, rho0)}, true);
            dumps.push_back(os.str());
        }
        const bool same = dumps[0] == dumps[1] && dumps[0] == dumps[2];
        pass &= same;
        detail += std::string("1/4/8 workers ") + (same ? "bit-identical" : "DIFFER");
    }
    return {pass, detail + " (" + fmt(clock.seconds(), 3) + " s)"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    std::set<int> selected;
    for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
    int failed = 0;
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
        if (!selected.empty() && !selected.count(k)) continue;
        Outcome o;
        try {
            o = criteria[k - 1]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
