#include "nmqsd/oracles.hpp"

#include "nmqsd/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <cmath>
#include <functional>
#include <map>

namespace nmqsd {

namespace {

using SpMat = Eigen::SparseMatrix<cplx>;

// Number of RK4 substeps per grid interval for a generator of size `scale`.
int substeps(double dt, double scale) {
    return std::max(1, static_cast<int>(std::ceil(dt * scale / 0.1)));
}

// RK4 of dX/dt = f(X) with a fixed number of substeps per grid step.
template <typename F>
std::vector<Mat> rk4_series(const Mat& x0, const TimeGrid& grid, int sub, F&& f) {
    std::vector<Mat> out{x0};
    Mat x = x0;
    const double h = grid.dt / sub;
    for (int i = 0; i < grid.n_steps; ++i) {
        for (int q = 0; q < sub; ++q) {
            const Mat k1 = f(x);
            const Mat k2 = f(x + 0.5 * h * k1);
            const Mat k3 = f(x + 0.5 * h * k2);
            const Mat k4 = f(x + h * k3);
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push_back(x);
    }
    return out;
}

struct TotalSystem {
    ExcitationSubspace basis;
    SpMat h;
};

TotalSystem total_hamiltonian(const ModelSpec& model, const std::vector<BathMode>& modes, int max_exc) {
    TotalSystem ts;
    ts.basis = enumerate_subspace(model, static_cast<int>(modes.size()), max_exc);
    const auto& b = ts.basis;
    std::map<std::pair<int, std::vector<int>>, int> index;
    for (std::size_t q = 0; q < b.size(); ++q) index[{b.system[q], b.occupations[q]}] = static_cast<int>(q);

    std::vector<Eigen::Triplet<cplx>> trip;
    const Mat& hs = model.h_sys;
    const Mat& l = model.l_op;
    for (std::size_t q = 0; q < b.size(); ++q) {
        const int s = b.system[q];
        const auto& occ = b.occupations[q];
        // H_sys (x) 1 and the mode energies
        for (int s2 = 0; s2 < model.dim(); ++s2) {
            if (hs(s2, s) != 0.0) {
                auto it = index.find({s2, occ});
                if (it != index.end()) trip.emplace_back(it->second, q, hs(s2, s));
            }
        }
        double e_modes = 0.0;
        for (std::size_t k = 0; k < modes.size(); ++k) e_modes += modes[k].omega * occ[k];
        trip.emplace_back(q, q, e_modes);
        // g_k L a_k^dagger + conj(g_k) L^dagger a_k
        for (std::size_t k = 0; k < modes.size(); ++k) {
            for (int s2 = 0; s2 < model.dim(); ++s2) {
                if (l(s2, s) != 0.0) {
                    auto up = occ;
                    ++up[k];
                    auto it = index.find({s2, up});
                    if (it != index.end()) {
                        trip.emplace_back(it->second, q, modes[k].g * l(s2, s) * std::sqrt(static_cast<double>(up[k])));
                    }
                }
                if (occ[k] > 0 && std::conj(l(s, s2)) != 0.0) {
                    auto down = occ;
                    --down[k];
                    auto it = index.find({s2, down});
                    if (it != index.end()) {
                        trip.emplace_back(it->second, q,
                                          std::conj(modes[k].g) * std::conj(l(s, s2)) * std::sqrt(static_cast<double>(occ[k])));
                    }
                }
            }
        }
    }
    ts.h.resize(static_cast<Eigen::Index>(b.size()), static_cast<Eigen::Index>(b.size()));
    ts.h.setFromTriplets(trip.begin(), trip.end());
    return ts;
}

// Evolves total pure states: returns, per grid point, the state vectors.
std::vector<Vec> evolve_total(const TotalSystem& ts, const Vec& psi, const TimeGrid& grid) {
    const auto n = static_cast<Eigen::Index>(ts.basis.size());
    std::vector<Vec> out;
    if (n <= 1500) {
        Eigen::SelfAdjointEigenSolver<Mat> es{Mat(ts.h)};
        const Vec c = es.eigenvectors().adjoint() * psi;
        for (int i = 0; i <= grid.n_steps; ++i) {
            const double t = grid.t(i);
            Vec phase(n);
            for (Eigen::Index k = 0; k < n; ++k) phase(k) = std::exp(-kI * es.eigenvalues()(k) * t) * c(k);
            out.push_back(es.eigenvectors() * phase);
        }
        return out;
    }
    // large subspaces: sparse RK4
    double scale = 0.0;
    for (int k = 0; k < ts.h.outerSize(); ++k) {
        double col = 0.0;
        for (SpMat::InnerIterator it(ts.h, k); it; ++it) col += std::abs(it.value());
        scale = std::max(scale, col);
    }
    const int sub = substeps(grid.dt, 2.0 * scale);
    const double h = grid.dt / sub;
    Vec x = psi;
    out.push_back(x);
    for (int i = 0; i < grid.n_steps; ++i) {
        for (int q = 0; q < sub; ++q) {
            const Vec k1 = -kI * (ts.h * x);
            const Vec k2 = -kI * (ts.h * (x + 0.5 * h * k1));
            const Vec k3 = -kI * (ts.h * (x + 0.5 * h * k2));
            const Vec k4 = -kI * (ts.h * (x + h * k3));
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push_back(x);
    }
    return out;
}

Vec embed_state(const TotalSystem& ts, const Vec& psi_sys) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(ts.basis.size()));
    for (std::size_t q = 0; q < ts.basis.size(); ++q) {
        bool vacuum = true;
        for (int n : ts.basis.occupations[q]) vacuum = vacuum && n == 0;
        if (vacuum) v(static_cast<Eigen::Index>(q)) = psi_sys(ts.basis.system[q]);
    }
    return v;
}

} // namespace

ExcitationSubspace enumerate_subspace(const ModelSpec& model, int n_modes, int max_exc) {
    ExcitationSubspace b;
    for (int s = 0; s < model.dim(); ++s) {
        const int budget = max_exc - model.excitation[s];
        if (budget < 0) continue;
        std::vector<int> occ(n_modes, 0);
        std::function<void(int, int)> rec = [&](int k, int left) {
            if (k == n_modes) {
                b.system.push_back(s);
                b.occupations.push_back(occ);
                return;
            }
            for (int c = 0; c <= left; ++c) {
                occ[k] = c;
                rec(k + 1, left - c);
            }
            occ[k] = 0;
        };
        rec(0, budget);
    }
    if (b.size() > 100000) {
        throw ResourceError("excitation subspace has " + std::to_string(b.size()) + " states (limit 1e5)",
                            b.size() * b.size() * sizeof(cplx));
    }
    return b;
}

int max_excitation(const ModelSpec& model, const Mat& rho0) {
    int e = 0;
    for (int s = 0; s < model.dim(); ++s) {
        if (std::abs(rho0(s, s)) > 1e-14) e = std::max(e, model.excitation[s]);
    }
    return e;
}

DensityMatrixSeries solve_discrete_modes(const ModelSpec& model, const BathModes& bath, const Mat& rho0,
                                         const TimeGrid& grid) {
    if (bath.modes.empty()) throw InvalidParameter("discrete-mode oracle needs at least one mode");
    const int e = bath.max_excitations >= 0 ? bath.max_excitations : max_excitation(model, rho0);
    const TotalSystem ts = total_hamiltonian(model, bath.modes, e);

    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(rho0));
    const int d = model.dim();
    std::vector<Mat> rho(grid.size(), Mat::Zero(d, d));
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const double p = es.eigenvalues()(k);
        if (p <= 1e-14) continue;
        const auto states = evolve_total(ts, embed_state(ts, es.eigenvectors().col(k)), grid);
        for (int i = 0; i < grid.size(); ++i) {
            // partial trace over the modes
            std::map<std::vector<int>, std::vector<std::pair<int, cplx>>> by_occ;
            for (std::size_t q = 0; q < ts.basis.size(); ++q) {
                by_occ[ts.basis.occupations[q]].emplace_back(ts.basis.system[q], states[i](static_cast<Eigen::Index>(q)));
            }
            for (const auto& [occ, amps] : by_occ) {
                for (const auto& [a, va] : amps) {
                    for (const auto& [b2, vb] : amps) rho[i](a, b2) += p * va * std::conj(vb);
                }
            }
        }
    }
    return exact_series(grid, std::move(rho));
}

std::vector<Vec> bargmann_trajectory(const ModelSpec& model, const std::vector<BathMode>& modes, const Vec& psi0,
                                     const std::vector<cplx>& zk, const TimeGrid& grid) {
    if (zk.size() != modes.size()) throw InvalidParameter("one amplitude per mode required");
    int e = 0;
    for (int s = 0; s < model.dim(); ++s) {
        if (std::abs(psi0(s)) > 0.0) e = std::max(e, model.excitation[s]);
    }
    const TotalSystem ts = total_hamiltonian(model, modes, e);
    const auto states = evolve_total(ts, embed_state(ts, psi0), grid);
    std::vector<Vec> out;
    for (int i = 0; i < grid.size(); ++i) {
        const double t = grid.t(i);
        Vec psi = Vec::Zero(model.dim());
        for (std::size_t q = 0; q < ts.basis.size(); ++q) {
            cplx c{1.0, 0.0};
            for (std::size_t k = 0; k < modes.size(); ++k) {
                const int nk = ts.basis.occupations[q][k];
                c *= std::pow(std::conj(zk[k]) * std::exp(kI * modes[k].omega * t), nk) / std::sqrt(std::tgamma(nk + 1.0));
            }
            psi(ts.basis.system[q]) += c * states[i](static_cast<Eigen::Index>(q));
        }
        out.push_back(psi);
    }
    return out;
}

DensityMatrixSeries solve_lindblad(const LindbladSpec& spec, const Mat& rho0, const TimeGrid& grid) {
    if (spec.rate < 0.0) throw InvalidParameter("Lindblad rate must be non-negative");
    const Mat ldl = spec.l.adjoint() * spec.l;
    const Mat heff = spec.h - 0.5 * kI * spec.rate * ldl;
    const double scale = operator_norm(spec.h) + spec.rate * operator_norm(ldl);
    const int sub = substeps(grid.dt, 2.0 * scale);
    auto f = [&](const Mat& r) -> Mat {
        const Mat a = -kI * heff * r;
        return a + a.adjoint() + spec.rate * spec.l * r * spec.l.adjoint();
    };
    return exact_series(grid, rk4_series(rho0, grid, sub, f));
}

double markov_rate_ou(double gamma) {
    // 2 Re int_0^inf (gamma/2) e^{-gamma tau} dtau
    return 2.0 * (gamma / 2.0) / gamma;
}

namespace {

std::vector<Mat> pseudomode_run(const ModelSpec& model, double gamma, int n_ph, const Mat& rho0, const TimeGrid& grid) {
    const int d = model.dim();
    const int m = n_ph + 1;
    const Mat b = boson_annihilation(n_ph);
    const Mat id_s = Mat::Identity(d, d), id_m = Mat::Identity(m, m);
    const double g = std::sqrt(gamma / 2.0);
    const double kappa = 2.0 * gamma;
    const Mat bb = kron(id_s, b);
    const Mat ll = kron(model.l_op, id_m);
    const Mat h = kron(model.h_sys, id_m) + g * (ll * bb.adjoint() + ll.adjoint() * bb);
    const Mat heff = h - 0.5 * kI * kappa * bb.adjoint() * bb;
    Mat vac = Mat::Zero(m, m);
    vac(0, 0) = 1.0;
    const Mat x0 = kron(rho0, vac);
    const double scale = operator_norm(h) + kappa * n_ph;
    const int sub = substeps(grid.dt, 2.0 * scale);
    auto f = [&](const Mat& r) -> Mat {
        const Mat a = -kI * heff * r;
        return a + a.adjoint() + kappa * bb * r * bb.adjoint();
    };
    const auto total = rk4_series(x0, grid, sub, f);
    std::vector<Mat> out;
    for (const auto& x : total) {
        Mat r = Mat::Zero(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                for (int k = 0; k < m; ++k) r(i, j) += x(i * m + k, j * m + k);
            }
        }
        out.push_back(r);
    }
    return out;
}

} // namespace

DensityMatrixSeries solve_pseudomode_ou(const ModelSpec& model, double gamma, int n_ph_max, const Mat& rho0,
                                        const TimeGrid& grid, bool check_truncation) {
    if (gamma <= 0.0) throw InvalidParameter("OU gamma must be positive");
    const int n_ph = n_ph_max >= 0 ? n_ph_max : std::max(1, max_excitation(model, rho0));
    auto rho = pseudomode_run(model, gamma, n_ph, rho0, grid);
    if (check_truncation) {
        const auto more = pseudomode_run(model, gamma, n_ph + 1, rho0, grid);
        double worst = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i) worst = std::max(worst, trace_distance(rho[i], more[i]));
        if (worst > 1e-4) {
            throw TruncationError("pseudomode result moves by " + std::to_string(worst) + " when n_ph goes from " +
                                  std::to_string(n_ph) + " to " + std::to_string(n_ph + 1));
        }
    }
    return exact_series(grid, std::move(rho));
}

} // namespace nmqsd
