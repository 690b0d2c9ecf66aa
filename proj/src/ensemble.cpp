#include "nmqsd/ensemble.hpp"

#include "nmqsd/csv.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/rng.hpp"

#include <Eigen/Eigenvalues>

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace nmqsd {

namespace {

// Reduction unit; fixed so that results do not depend on the worker count.
constexpr int kBlock = 16;

// Running means and centred second moments (Welford within a block, pairwise
// merges across blocks), so identical samples give exactly zero variance.
struct Sums {
    double count{0.0};
    std::vector<Mat> mean;                // mean projector
    std::vector<Eigen::MatrixXd> m2re;    // sum of squared deviations of Re P
    std::vector<Eigen::MatrixXd> m2im;
    std::vector<double> nmean, nm2;       // same for ||psi||^2
    double drift{0.0};

    void init(int n_t, int d) {
        count = 0.0;
        mean.assign(n_t, Mat::Zero(d, d));
        m2re.assign(n_t, Eigen::MatrixXd::Zero(d, d));
        m2im.assign(n_t, Eigen::MatrixXd::Zero(d, d));
        nmean.assign(n_t, 0.0);
        nm2.assign(n_t, 0.0);
    }
    void begin_sample() { count += 1.0; }
    void sample(int t, const Mat& p, double nn) {
        const Mat delta = p - mean[t];
        mean[t] += delta / count;
        const Mat after = p - mean[t];
        m2re[t] += delta.real().cwiseProduct(after.real());
        m2im[t] += delta.imag().cwiseProduct(after.imag());
        const double dn = nn - nmean[t];
        nmean[t] += dn / count;
        nm2[t] += dn * (nn - nmean[t]);
    }
    void add(const Sums& o) {
        if (o.count == 0.0) return;
        const double n = count + o.count;
        const double wa = count / n, wb = o.count / n;
        for (std::size_t t = 0; t < mean.size(); ++t) {
            const Mat delta = o.mean[t] - mean[t];
            m2re[t] += o.m2re[t] + delta.real().cwiseAbs2() * (count * wb);
            m2im[t] += o.m2im[t] + delta.imag().cwiseAbs2() * (count * wb);
            mean[t] = wa * mean[t] + wb * o.mean[t];
            if (delta.isZero(0.0)) mean[t] = o.mean[t];
            const double dn = o.nmean[t] - nmean[t];
            nm2[t] += o.nm2[t] + dn * dn * count * wb;
            nmean[t] = dn == 0.0 ? o.nmean[t] : wa * nmean[t] + wb * o.nmean[t];
        }
        count = n;
        drift = std::max(drift, o.drift);
    }
};

struct Unravelling {
    std::vector<double> cumulative;
    std::vector<Vec> states;
};

Unravelling unravel(const Mat& rho0) {
    if (rho0.rows() != rho0.cols()) throw InvalidState("initial density matrix is not square");
    if (hermiticity_defect(rho0) > 1e-10) throw InvalidState("initial density matrix is not Hermitian");
    const double tr = rho0.trace().real();
    if (std::abs(tr - 1.0) > 1e-10) throw InvalidState("initial density matrix does not have unit trace");
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(rho0));
    Unravelling u;
    double acc = 0.0;
    for (Eigen::Index k = es.eigenvalues().size() - 1; k >= 0; --k) {
        const double p = es.eigenvalues()(k);
        if (p < -1e-8) throw InvalidState("initial density matrix has a negative eigenvalue");
        if (p <= 1e-14) continue;
        acc += p;
        u.cumulative.push_back(acc);
        u.states.push_back(es.eigenvectors().col(k));
    }
    for (auto& c : u.cumulative) c /= acc;
    return u;
}

} // namespace

DensityMatrixSeries run_ensemble(const QsdIntegrator& integrator, const Mat& rho0, const EnsembleConfig& cfg) {
    if (cfg.n_traj < 1) throw InvalidParameter("n_traj must be at least 1");
    if (cfg.threads < 1) throw InvalidParameter("threads must be at least 1");
    const auto& kernels = integrator.kernels();
    const TimeGrid grid = kernels.grid();
    const auto& corr = kernels.correlation();
    const int d = integrator.dim();
    const int n_t = grid.size();
    const Unravelling init = unravel(rho0);
    if (rho0.rows() != d) throw InvalidState("initial state dimension does not match the model");

    std::optional<CovarianceFactor> chol;
    if (cfg.generator && *cfg.generator == NoiseGenerator::Cholesky) chol.emplace(corr, grid);
    if (cfg.generator && *cfg.generator == NoiseGenerator::OrnsteinUhlenbeck && !corr.is_ou()) {
        throw InvalidCorrelation("the OU generator needs an OU correlation");
    }
    if (cfg.generator && *cfg.generator == NoiseGenerator::DiscreteModes && corr.is_ou()) {
        throw InvalidCorrelation("the discrete-mode generator needs a discrete-mode correlation");
    }

    TrajectoryOptions topts;
    topts.mode = cfg.mode;
    topts.obar_on_shifted_noise = cfg.obar_on_shifted_noise;

    const int n_blocks = (cfg.n_traj + kBlock - 1) / kBlock;
    const int n_groups = std::max(1, std::min(cfg.groups, n_blocks));
    std::vector<Sums> blocks(n_blocks);
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            const int b = next.fetch_add(1);
            if (b >= n_blocks) return;
            {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (failure) return;
            }
            Sums& s = blocks[b];
            s.init(n_t, d);
            try {
                const int lo = b * kBlock;
                const int hi = std::min(cfg.n_traj, lo + kBlock);
                for (int idx = lo; idx < hi; ++idx) {
                    const auto index = static_cast<std::uint64_t>(idx);
                    const RngStream noise(cfg.seed, index, RngDomain::Noise);
                    NoisePath path = chol ? chol->sample(noise) : sample_path(corr, grid, noise);
                    Vec psi0 = init.states.front();
                    if (init.states.size() > 1) {
                        const double u = RngStream(cfg.seed, index, RngDomain::InitialState).uniform(0);
                        std::size_t k = 0;
                        while (k + 1 < init.cumulative.size() && u > init.cumulative[k]) ++k;
                        psi0 = init.states[k];
                    }
                    const auto res = integrator.run(psi0, std::move(path), topts, cfg.seed, index);
                    s.begin_sample();
                    for (int t = 0; t < n_t; ++t) {
                        const Vec& v = res.psi[t];
                        s.sample(t, v * v.adjoint(), v.squaredNorm());
                    }
                    s.drift = std::max(s.drift, res.max_norm_drift);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int n_workers = std::min(cfg.threads, n_blocks);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    // fixed-order reduction: blocks -> groups -> total
    DensityMatrixSeries out;
    out.grid = grid;
    out.mode = cfg.mode;
    out.n_traj = cfg.n_traj;
    Sums total;
    total.init(n_t, d);
    for (int g = 0; g < n_groups; ++g) {
        const int b_lo = static_cast<int>(static_cast<long long>(g) * n_blocks / n_groups);
        const int b_hi = static_cast<int>(static_cast<long long>(g + 1) * n_blocks / n_groups);
        Sums gs;
        gs.init(n_t, d);
        for (int b = b_lo; b < b_hi; ++b) gs.add(blocks[b]);
        const int size = std::min(cfg.n_traj, b_hi * kBlock) - b_lo * kBlock;
        std::vector<Mat> gm(n_t);
        for (int t = 0; t < n_t; ++t) gm[t] = hermitian_part(gs.mean[t]);
        out.group_rho.push_back(std::move(gm));
        out.group_sizes.push_back(size);
        total.add(gs);
    }

    const double n = cfg.n_traj;
    out.max_norm_drift = total.drift;
    for (int t = 0; t < n_t; ++t) {
        out.rho.push_back(hermitian_part(total.mean[t]));
        Eigen::MatrixXd vr = Eigen::MatrixXd::Zero(d, d), vi = Eigen::MatrixXd::Zero(d, d);
        double nvar = 0.0;
        if (cfg.n_traj > 1) {
            vr = (total.m2re[t] / (n - 1)).cwiseMax(0.0);
            vi = (total.m2im[t] / (n - 1)).cwiseMax(0.0);
            nvar = std::max(0.0, total.nm2[t] / (n - 1));
        }
        out.se_re.push_back((vr / n).cwiseSqrt());
        out.se_im.push_back((vi / n).cwiseSqrt());
        out.norm2_mean.push_back(total.nmean[t]);
        out.norm2_stderr.push_back(std::sqrt(nvar / n));
    }
    out.stderr_scale = mc_error(out);
    return out;
}

std::vector<double> mc_error(const DensityMatrixSeries& series) {
    std::vector<double> e;
    for (std::size_t t = 0; t < series.rho.size(); ++t) {
        e.push_back(std::sqrt(series.se_re[t].squaredNorm() + series.se_im[t].squaredNorm()));
    }
    return e;
}

DensityMatrixSeries exact_series(const TimeGrid& grid, std::vector<Mat> rho) {
    DensityMatrixSeries s;
    s.grid = grid;
    s.n_traj = 0;
    const auto d = rho.empty() ? 0 : rho.front().rows();
    for (auto& r : rho) {
        s.rho.push_back(hermitian_part(r));
        s.se_re.push_back(Eigen::MatrixXd::Zero(d, d));
        s.se_im.push_back(Eigen::MatrixXd::Zero(d, d));
        s.norm2_mean.push_back(r.trace().real());
        s.norm2_stderr.push_back(0.0);
    }
    s.stderr_scale.assign(s.rho.size(), 0.0);
    return s;
}

void write_rho_csv(std::ostream& os, const DensityMatrixSeries& series) {
    csv::header(os, {"t", "i", "j", "re", "im"});
    for (std::size_t t = 0; t < series.rho.size(); ++t) {
        const Mat& r = series.rho[t];
        for (Eigen::Index i = 0; i < r.rows(); ++i) {
            for (Eigen::Index j = 0; j < r.cols(); ++j) {
                csv::row(os, series.grid.t(static_cast<int>(t)), static_cast<int>(i + 1), static_cast<int>(j + 1),
                         r(i, j).real(), r(i, j).imag());
            }
        }
    }
}

} // namespace nmqsd
