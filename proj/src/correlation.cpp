#include "nmqsd/correlation.hpp"

#include "nmqsd/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <array>
#include <optional>
#include <sstream>

namespace nmqsd {

// ------------------------------------------------------------ correlation

CorrelationFunction::CorrelationFunction(Kind kind) : kind_(std::move(kind)) {
    if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&kind_)) {
        terms_.push_back({cplx(0.5 * ou->gamma, 0.0), cplx(ou->gamma, 0.0)});
    } else {
        for (const auto& m : std::get<DiscreteModes>(kind_).modes) {
            terms_.push_back({cplx(std::norm(m.g), 0.0), cplx(0.0, m.omega)});
        }
    }
}

CorrelationFunction CorrelationFunction::ornstein_uhlenbeck(double gamma) {
    if (!(gamma > 0.0)) throw InvalidParameter("OU correlation needs gamma > 0");
    return CorrelationFunction(OrnsteinUhlenbeck{gamma});
}

CorrelationFunction CorrelationFunction::discrete_modes(std::vector<BathMode> modes) {
    if (modes.empty()) throw InvalidParameter("discrete-mode correlation needs at least one mode");
    // all-zero couplings are allowed: the closed-system limit alpha = 0
    for (const auto& m : modes) {
        if (!std::isfinite(std::norm(m.g)) || !std::isfinite(m.omega)) {
            throw InvalidParameter("discrete-mode coupling and frequency must be finite");
        }
    }
    return CorrelationFunction(DiscreteModes{std::move(modes)});
}

cplx CorrelationFunction::operator()(double t, double s) const {
    if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&kind_)) {
        return 0.5 * ou->gamma * std::exp(-ou->gamma * std::abs(t - s));
    }
    cplx sum = 0.0;
    for (const auto& m : std::get<DiscreteModes>(kind_).modes) {
        sum += std::norm(m.g) * std::exp(cplx(0.0, -m.omega * (t - s)));
    }
    return sum;
}

double CorrelationFunction::gamma() const {
    if (!is_ou()) throw InvalidCorrelation("gamma() requested from a discrete-mode correlation");
    return std::get<OrnsteinUhlenbeck>(kind_).gamma;
}

const std::vector<BathMode>& CorrelationFunction::modes() const {
    if (is_ou()) throw InvalidCorrelation("modes() requested from an OU correlation");
    return std::get<DiscreteModes>(kind_).modes;
}

std::string CorrelationFunction::describe() const {
    std::ostringstream os;
    if (is_ou()) {
        os << "OU(gamma=" << gamma() << ")";
    } else {
        os << "modes[";
        const auto& ms = modes();
        for (std::size_t k = 0; k < ms.size(); ++k) {
            os << (k ? ", " : "") << "g=" << ms[k].g << " w=" << ms[k].omega;
        }
        os << "]";
    }
    return os.str();
}

TimeGrid TimeGrid::covering(double dt, double t_end) {
    if (!(dt > 0.0)) throw InvalidParameter("time step must be positive");
    if (!(t_end >= 0.0)) throw InvalidParameter("end time must be non-negative");
    const double steps = t_end / dt;
    const long n = std::lround(steps);
    if (std::abs(steps - static_cast<double>(n)) > 1e-9 * std::max(1.0, steps)) {
        throw InvalidParameter("end time is not a multiple of the time step");
    }
    return TimeGrid{dt, static_cast<int>(n)};
}

// --------------------------------------------------------------- generators

NoisePath sample_ou_path(double gamma, const TimeGrid& grid, const RngStream& stream) {
    if (!(gamma > 0.0)) throw InvalidParameter("OU noise needs gamma > 0");
    NoisePath path{grid, std::vector<cplx>(grid.size()), {}};
    const double sigma = std::sqrt(0.25 * gamma);
    const double decay = std::exp(-gamma * grid.dt);
    const double kick = sigma * std::sqrt(1.0 - decay * decay);
    auto xi = stream.normal_pair(0);
    double x = sigma * xi[0];
    double y = sigma * xi[1];
    path.z[0] = cplx(x, y);
    for (int i = 1; i < grid.size(); ++i) {
        xi = stream.normal_pair(static_cast<std::uint64_t>(i));
        x = decay * x + kick * xi[0];
        y = decay * y + kick * xi[1];
        path.z[i] = cplx(x, y);
    }
    return path;
}

NoisePath discrete_mode_path(const std::vector<BathMode>& modes, const TimeGrid& grid,
                             const std::vector<cplx>& zk) {
    if (modes.empty()) throw InvalidParameter("discrete-mode noise needs at least one mode");
    if (zk.size() != modes.size()) {
        throw InvalidParameter("discrete-mode noise: one amplitude per mode required");
    }
    NoisePath path{grid, std::vector<cplx>(grid.size(), 0.0), {}};
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const cplx amp = -kI * modes[k].g * std::conj(zk[k]);
        for (int i = 0; i < grid.size(); ++i) {
            path.z[i] += amp * std::exp(cplx(0.0, modes[k].omega * grid.t(i)));
        }
    }
    return path;
}

NoisePath sample_discrete_mode_path(const std::vector<BathMode>& modes, const TimeGrid& grid,
                                    const RngStream& stream) {
    std::vector<cplx> zk(modes.size());
    for (std::size_t k = 0; k < modes.size(); ++k) zk[k] = stream.complex_normal(k);
    return discrete_mode_path(modes, grid, zk);
}

CovarianceFactor::CovarianceFactor(const CorrelationFunction& corr, const TimeGrid& grid)
    : grid_(grid) {
    const int n = grid.size();
    if (n > 4096) throw UnsupportedSize("Cholesky noise generator supports at most 4096 grid points");
    Mat c(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) c(i, j) = corr(grid.t(j), grid.t(i));
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(c));
    if (es.info() != Eigen::Success) {
        throw InvalidCorrelation("covariance eigendecomposition failed");
    }
    Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, std::abs(ev(ev.size() - 1)));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-10 * scale) {
            throw InvalidCorrelation("covariance matrix is not positive semidefinite (eigenvalue " +
                                     std::to_string(ev(i)) + ")");
        }
        ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    }
    factor_ = es.eigenvectors() * ev.asDiagonal();
}

NoisePath CovarianceFactor::sample(const RngStream& stream) const {
    const int n = grid_.size();
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi(i) = stream.complex_normal(static_cast<std::uint64_t>(i));
    const Vec z = factor_ * xi;
    return NoisePath{grid_, std::vector<cplx>(z.data(), z.data() + n), {}};
}

NoisePath sample_gaussian_path_cholesky(const CorrelationFunction& corr, const TimeGrid& grid,
                                        const RngStream& stream) {
    return CovarianceFactor(corr, grid).sample(stream);
}

NoisePath sample_path(const CorrelationFunction& corr, const TimeGrid& grid,
                      const RngStream& stream) {
    if (corr.is_ou()) return sample_ou_path(corr.gamma(), grid, stream);
    return sample_discrete_mode_path(corr.modes(), grid, stream);
}

// ------------------------------------------------------------- moment checks

std::string to_string(NoiseGenerator g) {
    switch (g) {
        case NoiseGenerator::OrnsteinUhlenbeck: return "ou-ar1";
        case NoiseGenerator::DiscreteModes: return "discrete-modes";
        case NoiseGenerator::Cholesky: return "cholesky";
    }
    return "unknown";
}

namespace {

struct RunningMoment {
    double sum{0.0};
    double sum_sq{0.0};
    void add(double x) {
        sum += x;
        sum_sq += x * x;
    }
    double mean(int n) const { return sum / n; }
    double std_error(int n) const {
        const double m = mean(n);
        const double var = std::max(0.0, (sum_sq / n - m * m) * n / (n - 1.0));
        return std::sqrt(var / n);
    }
};

} // namespace

std::vector<MomentCheck> noise_moment_checks(NoiseGenerator generator,
                                             const CorrelationFunction& corr,
                                             const TimeGrid& grid, int n_paths,
                                             std::uint64_t seed,
                                             const std::vector<std::pair<int, int>>& pairs,
                                             double sigmas) {
    if (n_paths < 2) throw InvalidParameter("moment checks need at least two paths");
    for (const auto& [i, j] : pairs) {
        if (i < 0 || j < 0 || i >= grid.size() || j >= grid.size()) {
            throw InvalidParameter("moment check index outside the grid");
        }
    }
    std::optional<CovarianceFactor> factor;
    if (generator == NoiseGenerator::Cholesky) factor.emplace(corr, grid);

    // per pair: Re/Im of z_t, z_t z_s, z_t^* z_s
    std::vector<std::array<RunningMoment, 6>> acc(pairs.size());
    for (int p = 0; p < n_paths; ++p) {
        const RngStream stream(seed, static_cast<std::uint64_t>(p));
        NoisePath path;
        switch (generator) {
            case NoiseGenerator::OrnsteinUhlenbeck:
                path = sample_ou_path(corr.gamma(), grid, stream);
                break;
            case NoiseGenerator::DiscreteModes:
                path = sample_discrete_mode_path(corr.modes(), grid, stream);
                break;
            case NoiseGenerator::Cholesky:
                path = factor->sample(stream);
                break;
        }
        for (std::size_t q = 0; q < pairs.size(); ++q) {
            const cplx zt = path.z[pairs[q].first];
            const cplx zs = path.z[pairs[q].second];
            const cplx zz = zt * zs;
            const cplx cc = std::conj(zt) * zs;
            auto& a = acc[q];
            a[0].add(zt.real());
            a[1].add(zt.imag());
            a[2].add(zz.real());
            a[3].add(zz.imag());
            a[4].add(cc.real());
            a[5].add(cc.imag());
        }
    }

    std::vector<MomentCheck> out;
    for (std::size_t q = 0; q < pairs.size(); ++q) {
        const double t = grid.t(pairs[q].first);
        const double s = grid.t(pairs[q].second);
        const cplx target = corr(t, s);
        std::ostringstream where;
        where << " (t=" << t << ",s=" << s << ")";
        const std::array<std::pair<std::string, double>, 6> spec{{
            {"Re M[z_t]", 0.0},
            {"Im M[z_t]", 0.0},
            {"Re M[z_t z_s]", 0.0},
            {"Im M[z_t z_s]", 0.0},
            {"Re M[z*_t z_s]", target.real()},
            {"Im M[z*_t z_s]", target.imag()},
        }};
        for (int c = 0; c < 6; ++c) {
            MomentCheck m;
            m.name = spec[c].first + where.str();
            m.value = acc[q][c].mean(n_paths);
            m.expected = spec[c].second;
            m.std_error = acc[q][c].std_error(n_paths);
            // A component that is identically its target (e.g. Im of a real
            // kernel at t = s) has zero spread; allow rounding only.
            const double tol = std::max(sigmas * m.std_error, 1e-12);
            m.pass = std::abs(m.value - m.expected) <= tol;
            out.push_back(std::move(m));
        }
    }
    return out;
}

} // namespace nmqsd
