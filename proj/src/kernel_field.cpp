#include "nmqsd/kernel_field.hpp"

#include "nmqsd/csv.hpp"
#include "nmqsd/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nmqsd {

// ------------------------------------------------------------ binomials

Binomial::Binomial(int rows, int cols) : cols_(cols), table_(static_cast<std::size_t>(rows) * cols, 0) {
    for (int a = 0; a < rows; ++a) {
        table_[static_cast<std::size_t>(a) * cols] = 1;
        for (int b = 1; b < cols && b <= a; ++b) {
            table_[static_cast<std::size_t>(a) * cols + b] =
                table_[static_cast<std::size_t>(a - 1) * cols + b - 1] +
                (b <= a - 1 ? table_[static_cast<std::size_t>(a - 1) * cols + b] : 0);
        }
    }
}

namespace {

// Next nondecreasing tuple in colex order with entries <= max.
bool next_tuple(std::vector<int>& u, int max) {
    const int k = static_cast<int>(u.size());
    for (int l = 0; l < k; ++l) {
        const int limit = (l + 1 < k) ? u[l + 1] : max;
        if (u[l] < limit) {
            ++u[l];
            for (int m = 0; m < l; ++m) u[m] = 0;
            return true;
        }
    }
    return false;
}

// k! / prod(multiplicity!) for a sorted tuple.
double multiplicity(const std::vector<int>& u) {
    double fact = 1.0;
    for (std::size_t l = 1; l <= u.size(); ++l) fact *= static_cast<double>(l);
    std::size_t run = 1;
    for (std::size_t l = 1; l <= u.size(); ++l) {
        if (l < u.size() && u[l] == u[l - 1]) {
            ++run;
        } else {
            for (std::size_t r = 2; r <= run; ++r) fact /= static_cast<double>(r);
            run = 1;
        }
    }
    return fact;
}

// out -= m * x, m column-major (rows x cols).
inline void gemv_sub(const Mat& m, const cplx* x, cplx* out) {
    const auto rows = m.rows();
    const auto cols = m.cols();
    const cplx* d = m.data();
    for (Eigen::Index c = 0; c < cols; ++c) {
        const cplx xc = x[c];
        const cplx* col = d + c * rows;
        for (Eigen::Index r = 0; r < rows; ++r) out[r] -= col[r] * xc;
    }
}

bool all_finite(std::span<const cplx> v) {
    return std::all_of(v.begin(), v.end(), [](const cplx& c) {
        return std::isfinite(c.real()) && std::isfinite(c.imag()) && std::abs(c) < 1e150;
    });
}

// Least-squares expansion in the compressed Frobenius product.
class Projector {
public:
    Projector(const std::vector<Mat>& ops, const OperatorAlgebra& alg) : alg_(alg) {
        for (const auto& o : ops) compressed_.push_back(alg.compress(o));
        const auto n = static_cast<Eigen::Index>(ops.size());
        Mat gram(n, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = 0; b < n; ++b) gram(a, b) = frobenius_inner(compressed_[a], compressed_[b]);
        }
        solver_ = Eigen::CompleteOrthogonalDecomposition<Mat>(gram);
    }

    Vec operator()(const Mat& x, double tol, double& worst) const {
        const Mat cx = alg_.compress(x);
        const auto n = static_cast<Eigen::Index>(compressed_.size());
        Vec rhs(n);
        for (Eigen::Index a = 0; a < n; ++a) rhs(a) = frobenius_inner(compressed_[a], cx);
        Vec c = n ? Vec(solver_.solve(rhs)) : Vec();
        Mat rem = cx;
        for (Eigen::Index a = 0; a < n; ++a) rem -= c(a) * compressed_[a];
        const double rel = rem.norm() / std::max(1.0, cx.norm());
        worst = std::max(worst, rel);
        if (rel > tol) {
            std::ostringstream os;
            os << "projection residual " << rel << " exceeds " << tol
               << "; the basis is not closed under the O-equation";
            throw BasisIncomplete(os.str());
        }
        return c;
    }

private:
    const OperatorAlgebra& alg_;
    std::vector<Mat> compressed_;
    Eigen::CompleteOrthogonalDecomposition<Mat> solver_;
};

} // namespace

// ------------------------------------------------------- projected RHS

ProjectedRhs derive_projected_rhs(const OBasis& basis, int k_trunc, double tol) {
    if (k_trunc < 0 || k_trunc > basis.k_max()) {
        throw InvalidParameter("K_trunc must lie in [0, " + std::to_string(basis.k_max()) + "]");
    }
    const auto& alg = basis.algebra;
    const Mat ldag = alg.l.adjoint();
    const int kk = k_trunc;

    ProjectedRhs r;
    r.k_trunc = kk;
    for (int k = 0; k <= kk; ++k) r.counts.push_back(basis.size(k));
    std::vector<Projector> proj;
    for (int k = 0; k <= kk; ++k) proj.emplace_back(basis.orders[k], alg);

    double worst = 0.0;
    auto map_matrix = [&](int k_in, int k_out, auto&& fn) {
        Mat m(r.counts[k_out], r.counts[k_in]);
        for (int b = 0; b < r.counts[k_in]; ++b) m.col(b) = proj[k_out](fn(basis.orders[k_in][b]), tol, worst);
        return m;
    };

    r.l_coeffs = proj[0](alg.l, tol, worst);
    r.hmap.resize(kk + 1);
    r.raise.resize(kk + 1);
    r.lower.resize(kk + 1);
    for (int k = 0; k <= kk; ++k) {
        r.hmap[k] = map_matrix(k, k, [&](const Mat& x) { return Mat(-kI * commutator(alg.h, x)); });
        if (k >= 1) r.raise[k] = map_matrix(k - 1, k, [&](const Mat& x) { return commutator(alg.l, x); });
        if (k < kk) r.lower[k] = map_matrix(k + 1, k, [&](const Mat& x) { return Mat(ldag * x); });
    }
    r.comm.assign(kk + 1, {});
    for (int m = 0; m <= kk; ++m) {
        r.comm[m].resize(kk + 1 - m);
        for (int q = 0; m + q <= kk; ++q) {
            for (int a = 0; a < r.counts[m]; ++a) {
                const Mat la = ldag * basis.orders[m][a];
                r.comm[m][q].push_back(map_matrix(q, m + q, [&](const Mat& x) { return commutator(la, x); }));
            }
        }
    }
    r.max_residual = worst;
    return r;
}

// --------------------------------------------------------- KernelField

void KernelField::init(const OBasis& basis, const CorrelationFunction& corr, const TimeGrid& grid,
                       int k_trunc) {
    basis_ = basis;
    corr_ = corr;
    grid_ = grid;
    k_trunc_ = k_trunc;
    counts_.clear();
    for (int k = 0; k <= k_trunc; ++k) counts_.push_back(basis.size(k));
    const int n = grid.n_steps;
    binom_ = Binomial(n + k_trunc + 4, k_trunc + 3);
    const auto tri = static_cast<std::size_t>(n + 1) * (n + 2) / 2;
    f_.assign(tri * counts_[0], cplx{});
    big_p_.assign(k_trunc + 1, {});
    p_hat_.assign(k_trunc + 1, {});
    for (int k = 0; k <= k_trunc; ++k) {
        const std::size_t total = binom_(n + 1 + k, k + 1) * counts_[k];
        big_p_[k].assign(total, cplx{});
        p_hat_[k].assign(total, cplx{});
    }
}

std::size_t KernelField::rank(std::span<const int> u) const {
    std::size_t r = 0;
    for (std::size_t l = 0; l < u.size(); ++l) r += binom_(u[l] + static_cast<int>(l), static_cast<int>(l) + 1);
    return r;
}

std::span<const cplx> KernelField::f(int i, int s) const {
    const std::size_t row = static_cast<std::size_t>(i) * (i + 1) / 2 + s;
    return {f_.data() + row * counts_[0], static_cast<std::size_t>(counts_[0])};
}

std::span<const cplx> KernelField::big_p(int k, int i, std::size_t r) const {
    return {big_p_[k].data() + p_offset(k, i) + r * counts_[k], static_cast<std::size_t>(counts_[k])};
}

void KernelField::store_big_p(int i, std::span<const cplx> values, int k) {
    const std::size_t off = p_offset(k, i);
    const int cnt = counts_[k];
    std::copy(values.begin(), values.end(), big_p_[k].begin() + static_cast<std::ptrdiff_t>(off));
    if (k == 0) {
        std::copy(values.begin(), values.end(), p_hat_[k].begin() + static_cast<std::ptrdiff_t>(off));
        return;
    }
    const double dt = grid_.dt;
    std::vector<int> u(k, 0);
    std::size_t r = 0;
    do {
        double w = multiplicity(u);
        for (int v : u) w *= (v == 0 ? 0.5 * dt : dt);
        for (int j = 0; j < cnt; ++j) p_hat_[k][off + r * cnt + j] = w * values[r * cnt + j];
        ++r;
    } while (next_tuple(u, i));
}

void KernelField::endpoint_polynomial(int k, int i, std::span<const cplx> z,
                                      std::vector<Vec>& coeffs) const {
    const int cnt = counts_[k];
    coeffs.assign(k + 1, Vec::Zero(cnt));
    if (i == 0) return;
    const cplx* base_ptr = p_hat_[k].data() + p_offset(k, i);

    // Sum over sorted q-tuples with entries <= vmax, rank offset `base`.
    auto accumulate = [&](auto&& self, int q, int vmax, std::size_t base, cplx factor, cplx* out) -> void {
        if (q == 0) {
            const cplx* p = base_ptr + base * cnt;
            for (int j = 0; j < cnt; ++j) out[j] += factor * p[j];
            return;
        }
        if (q == 1) {
            const cplx* p = base_ptr + base * cnt;
            for (int v = 0; v <= vmax; ++v) {
                const cplx fz = factor * z[v];
                for (int j = 0; j < cnt; ++j) out[j] += fz * p[v * cnt + j];
            }
            return;
        }
        for (int v = 0; v <= vmax; ++v) {
            self(self, q - 1, v, base + binom_(v + q - 1, q), factor * z[v], out);
        }
    };

    for (int r = 0; r <= k; ++r) {
        // r slots sit at the endpoint i (positions k-r+1..k of the sorted tuple)
        std::size_t base = 0;
        for (int l = k - r + 1; l <= k; ++l) base += binom_(i + l - 1, l);
        const int q = k - r;
        if (q > 0 && i == 0) continue;
        accumulate(accumulate, q, i - 1, base, std::ldexp(1.0, -r), coeffs[r].data());
    }
}

std::vector<Vec> KernelField::obar_coefficients(int i, std::span<const cplx> z) const {
    std::vector<Vec> out;
    std::vector<Vec> poly;
    for (int k = 0; k <= k_trunc_; ++k) {
        endpoint_polynomial(k, i, z, poly);
        Vec c = Vec::Zero(counts_[k]);
        cplx xr{1.0, 0.0};
        for (int r = 0; r <= k; ++r) {
            c += xr * poly[r];
            if (r < k) xr *= z[i];
        }
        out.push_back(std::move(c));
    }
    return out;
}

Mat KernelField::assemble_obar(int i, std::span<const cplx> z) const {
    const auto coeffs = obar_coefficients(i, z);
    Mat o = Mat::Zero(basis_.algebra.dim(), basis_.algebra.dim());
    for (int k = 0; k <= k_trunc_; ++k) {
        for (int j = 0; j < counts_[k]; ++j) o += coeffs[k](j) * basis_.orders[k][j];
    }
    return o;
}

std::span<const cplx> KernelField::p(int k, int i, int s, std::size_t r) const {
    if (k == 0) return f(i, s);
    const auto it = slices_.find(i);
    if (it == slices_.end()) throw InvalidParameter("no kernel slice kept for step " + std::to_string(i));
    const std::size_t idx = (r * (i + 1) + s) * counts_[k];
    return {it->second[k].data() + idx, static_cast<std::size_t>(counts_[k])};
}

Mat KernelField::assemble_o(int i, int s, std::span<const cplx> z) const {
    const double dt = grid_.dt;
    Mat o = Mat::Zero(basis_.algebra.dim(), basis_.algebra.dim());
    const auto f0 = f(i, s);
    for (int j = 0; j < counts_[0]; ++j) o += f0[j] * basis_.orders[0][j];
    if (i == 0) return o;
    for (int k = 1; k <= k_trunc_; ++k) {
        Vec c = Vec::Zero(counts_[k]);
        std::vector<int> u(k, 0);
        std::size_t r = 0;
        do {
            cplx w = multiplicity(u);
            for (int v : u) w *= ((v == 0 || v == i) ? 0.5 * dt : dt) * z[v];
            const auto pv = p(k, i, s, r);
            for (int j = 0; j < counts_[k]; ++j) c(j) += w * pv[j];
            ++r;
        } while (next_tuple(u, i));
        for (int j = 0; j < counts_[k]; ++j) o += c(j) * basis_.orders[k][j];
    }
    return o;
}

void KernelField::write_order0_csv(std::ostream& os) const {
    csv::header(os, {"t", "s", "j", "re_f", "im_f"});
    for (int i = 0; i <= grid_.n_steps; ++i) {
        for (int s = 0; s <= i; ++s) {
            const auto v = f(i, s);
            for (int j = 0; j < counts_[0]; ++j) {
                csv::row(os, grid_.t(i), grid_.t(s), j + 1, v[j].real(), v[j].imag());
            }
        }
    }
}

// ---------------------------------------------------------- propagation

KernelField propagate_kernels(const OBasis& basis, const CorrelationFunction& corr,
                              const TimeGrid& grid, const KernelOptions& opts) {
    const int kk = opts.k_trunc < 0 ? basis.k_max() : opts.k_trunc;
    const ProjectedRhs rhs = derive_projected_rhs(basis, kk);
    const int n = grid.n_steps;
    const double dt = grid.dt;
    const std::size_t stride = static_cast<std::size_t>(n) + 1;

    KernelField kf;
    kf.init(basis, corr, grid, kk);
    const auto& C = kf.binom_;
    const auto& cnt = kf.counts_;

    // memory: three working copies of every slice plus the P tables
    double bytes = 0.0;
    for (int k = 0; k <= kk; ++k) {
        bytes += 3.0 * static_cast<double>(C(n + k, k)) * stride * cnt[k] * sizeof(cplx);
        bytes += 2.0 * static_cast<double>(C(n + 1 + k, k + 1)) * cnt[k] * sizeof(cplx);
        bytes += static_cast<double>(opts.snapshot_steps.size()) * C(n + k, k) * stride * cnt[k] * sizeof(cplx);
    }
    bytes += static_cast<double>(kf.f_.size()) * sizeof(cplx);
    kf.bytes_ = static_cast<std::size_t>(bytes);
    if (bytes > opts.memory_cap_bytes) {
        std::ostringstream os;
        os << "kernel tables need about " << bytes / 1e9 << " GB (cap " << opts.memory_cap_bytes / 1e9
           << " GB) for " << n << " steps at K_trunc=" << kk;
        throw ResourceError(os.str(), bytes);
    }

    auto idx = [&](int k, std::size_t r, int s) { return (r * stride + s) * cnt[k]; };
    std::vector<std::vector<cplx>> y0(kk + 1), ys(kk + 1), acc(kk + 1), pst(kk + 1);
    for (int k = 0; k <= kk; ++k) {
        y0[k].assign(C(n + k, k) * stride * cnt[k], cplx{});
        ys[k] = y0[k];
        acc[k] = y0[k];
        pst[k].assign(C(n + k, k) * cnt[k], cplx{});
    }
    for (int j = 0; j < cnt[0]; ++j) y0[0][j] = rhs.l_coeffs(j);
    std::copy(y0[0].begin(), y0[0].begin() + cnt[0], kf.f_.begin());

    std::vector<int> snaps = opts.snapshot_steps;
    std::sort(snaps.begin(), snaps.end());
    auto snapshot = [&](int i) {
        if (!std::binary_search(snaps.begin(), snaps.end(), i)) return;
        std::vector<std::vector<cplx>> s(kk + 1);
        for (int k = 1; k <= kk; ++k) {
            const std::size_t rows = C(i + k, k);
            s[k].resize(rows * (i + 1) * cnt[k]);
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(y0[k].begin() + idx(k, r, 0), (i + 1) * cnt[k], s[k].begin() + r * (i + 1) * cnt[k]);
            }
        }
        kf.slices_[i] = std::move(s);
    };
    snapshot(0);

    // subsets of tuple positions, grouped by size
    std::vector<std::vector<unsigned>> masks(kk + 1);
    for (int k = 0; k <= kk; ++k) {
        for (unsigned mask = 1; mask < (1u << k); ++mask) masks[k].push_back(mask);
    }

    const double c_stage[4] = {0.0, 0.5, 0.5, 1.0};
    const double b_stage[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
    std::vector<cplx> aw(stride);
    Mat outb, gath;
    std::vector<int> u, ua, uc;
    std::vector<Mat> mask_mats;
    std::vector<std::size_t> mask_rank_c;
    std::vector<int> mask_q;

    for (int i = 0; i < n; ++i) {
        const double t = grid.t(i);
        for (int k = 0; k <= kk; ++k) {
            const std::size_t active = C(i + k, k) * stride * cnt[k];
            std::copy_n(y0[k].begin(), active, ys[k].begin());
            std::copy_n(y0[k].begin(), active, acc[k].begin());
        }
        for (int st = 0; st < 4; ++st) {
            const double tau = t + c_stage[st] * dt;
            const double hp = tau - t;
            // quadrature weights of int_0^tau alpha(tau,s) (.) ds on the frozen domain
            for (int s = 0; s <= i; ++s) {
                const double w = (i == 0) ? 0.0 : ((s == 0 || s == i) ? 0.5 * dt : dt);
                aw[s] = w * corr(tau, grid.t(s));
            }
            aw[i] += 0.5 * hp * corr(tau, t);
            const cplx a_tt = 0.5 * hp * corr(tau, tau);

            for (int m = 0; m <= kk; ++m) {
                const std::size_t rows = C(i + m, m);
                for (std::size_t r = 0; r < rows; ++r) {
                    cplx* pr = pst[m].data() + r * cnt[m];
                    for (int j = 0; j < cnt[m]; ++j) pr[j] = 0.0;
                    Eigen::Map<const Mat> ym(ys[m].data() + idx(m, r, 0), cnt[m], i + 1);
                    Eigen::Map<Vec>(pr, cnt[m]).noalias() += ym * Eigen::Map<const Vec>(aw.data(), i + 1);
                    if (m == 0) {
                        for (int j = 0; j < cnt[0]; ++j) pr[j] += a_tt * rhs.l_coeffs(j);
                    }
                }
            }

            const double wacc = b_stage[st] * dt;
            const double wnext = st < 3 ? c_stage[st + 1] * dt : 0.0;
            for (int k = kk; k >= 0; --k) {
                // same-cell part: [-iH, .] - [L^dagger Obar^(0), .]
                Mat heff = rhs.hmap[k];
                for (int a = 0; a < cnt[0]; ++a) heff -= pst[0][a] * rhs.comm[0][k][a];
                Mat low;
                if (k < kk) low = static_cast<double>(k + 1) * rhs.lower[k];
                u.assign(k, 0);
                std::size_t r = 0;
                do {
                    // per-tuple matrices for every proper non-empty subset of positions
                    mask_mats.clear();
                    mask_rank_c.clear();
                    mask_q.clear();
                    for (unsigned mask : masks[k]) {
                        const int m = std::popcount(mask);
                        const int q = k - m;
                        ua.clear();
                        uc.clear();
                        for (int l = 0; l < k; ++l) ((mask >> l) & 1u ? ua : uc).push_back(u[l]);
                        const std::size_t ra = kf.rank(ua);
                        const cplx* pa = pst[m].data() + ra * cnt[m];
                        Mat mm = Mat::Zero(cnt[k], cnt[q]);
                        for (int a = 0; a < cnt[m]; ++a) mm += pa[a] * rhs.comm[m][q][a];
                        mask_mats.push_back(mm / static_cast<double>(C(k, m)));
                        mask_rank_c.push_back(kf.rank(uc));
                        mask_q.push_back(q);
                    }
                    // prefix/suffix rank pieces for inserting s into u
                    std::size_t pos = 0;
                    std::vector<std::size_t> pre(k + 1, 0), suf(k + 2, 0);
                    for (int l = 1; l <= k; ++l) pre[l] = pre[l - 1] + C(u[l - 1] + l - 1, l);
                    for (int l = k; l >= 1; --l) suf[l] = suf[l + 1] + C(u[l - 1] + l, l + 1);

                    const Eigen::Index ns = i + 1;
                    cplx* cell = ys[k].data() + idx(k, r, 0);
                    Eigen::Map<Mat> ycell(cell, cnt[k], ns);
                    outb.noalias() = heff * ycell;
                    for (std::size_t mi = 0; mi < mask_mats.size(); ++mi) {
                        const int q = mask_q[mi];
                        Eigen::Map<const Mat> yq(ys[q].data() + idx(q, mask_rank_c[mi], 0), cnt[q], ns);
                        outb.noalias() -= mask_mats[mi] * yq;
                    }
                    if (k < kk) {
                        gath.resize(cnt[k + 1], ns);
                        for (int s = 0; s <= i; ++s) {
                            while (pos < static_cast<std::size_t>(k) && u[pos] <= s) ++pos;
                            const std::size_t rr = pre[pos] + C(s + static_cast<int>(pos), static_cast<int>(pos) + 1) +
                                                   suf[pos + 1];
                            std::copy_n(pst[k + 1].data() + rr * cnt[k + 1], cnt[k + 1], gath.col(s).data());
                        }
                        outb.noalias() -= low * gath;
                    }
                    Eigen::Map<Mat> acell(acc[k].data() + idx(k, r, 0), cnt[k], ns);
                    acell += wacc * outb;
                    if (st < 3) {
                        Eigen::Map<const Mat> y0cell(y0[k].data() + idx(k, r, 0), cnt[k], ns);
                        ycell = y0cell + wnext * outb;
                    }
                    ++r;
                } while (next_tuple(u, i));
            }
        }
        for (int k = 0; k <= kk; ++k) {
            const std::size_t active = C(i + k, k) * stride * cnt[k];
            std::copy_n(acc[k].begin(), active, y0[k].begin());
        }

        // newborn cells at t_{i+1}
        const int ni = i + 1;
        for (int j = 0; j < cnt[0]; ++j) y0[0][idx(0, 0, ni) + j] = rhs.l_coeffs(j);
        for (int k = 1; k <= kk; ++k) {
            const std::size_t old_rows = C(i + k, k);
            for (std::size_t r = 0; r < old_rows; ++r) {
                std::fill_n(y0[k].begin() + idx(k, r, ni), cnt[k], cplx{});
            }
            u.assign(k, 0);
            u[k - 1] = ni;
            std::size_t r = old_rows;
            do {
                const std::size_t rc = kf.rank(std::span<const int>(u.data(), k - 1));
                for (int s = 0; s <= i; ++s) {
                    cplx* dst = y0[k].data() + idx(k, r, s);
                    const cplx* src = y0[k - 1].data() + idx(k - 1, rc, s);
                    for (int j = 0; j < cnt[k]; ++j) {
                        cplx v = 0.0;
                        for (int b = 0; b < cnt[k - 1]; ++b) v += rhs.raise[k](j, b) * src[b];
                        dst[j] = v / static_cast<double>(k);
                    }
                }
                std::fill_n(y0[k].begin() + idx(k, r, ni), cnt[k], cplx{});
                ++r;
            } while (next_tuple(u, ni));
        }
        {
            const std::size_t row = static_cast<std::size_t>(ni) * (ni + 1) / 2;
            std::copy_n(y0[0].begin(), (ni + 1) * cnt[0], kf.f_.begin() + row * cnt[0]);
        }

        // P(t_{i+1}, u) with the full trapezoid on [0, t_{i+1}]
        const double tn = grid.t(ni);
        for (int s = 0; s <= ni; ++s) {
            aw[s] = ((s == 0 || s == ni) ? 0.5 * dt : dt) * corr(tn, grid.t(s));
        }
        for (int m = 0; m <= kk; ++m) {
            const std::size_t rows = C(ni + m, m);
            std::vector<cplx> vals(rows * cnt[m], cplx{});
            for (std::size_t r = 0; r < rows; ++r) {
                Eigen::Map<const Mat> ym(y0[m].data() + idx(m, r, 0), cnt[m], ni + 1);
                Eigen::Map<Vec>(vals.data() + r * cnt[m], cnt[m]).noalias() = ym * Eigen::Map<const Vec>(aw.data(), ni + 1);
            }
            if (!all_finite(vals)) {
                std::ostringstream os;
                os << "order-" << m << " kernel integral non-finite or above 1e150";
                throw KernelBlowup(tn, os.str());
            }
            kf.store_big_p(ni, vals, m);
        }
        snapshot(ni);
    }
    return kf;
}

KernelField propagate_ncavity_kernels(const ModelSpec& model, const CorrelationFunction& corr,
                                      const TimeGrid& grid, bool literal_hopping) {
    if (model.family != ModelFamily::NCavity) {
        throw InvalidModel("propagate_ncavity_kernels needs an N-cavity model");
    }
    const auto& par = std::get<NCavityParams>(model.params);
    const int nc = par.n_modes;

    // raw basis {a_1..a_N} on the algebra space
    OBasis basis;
    basis.family = model.family;
    basis.algebra = model.algebra;
    {
        const int per_mode = static_cast<int>(std::lround(
            std::pow(static_cast<double>(model.algebra.dim()), 1.0 / nc)));
        const std::vector<int> dims(nc, per_mode);
        const Mat a = boson_annihilation(per_mode - 1);
        std::vector<Mat> ops;
        for (int j = 0; j < nc; ++j) ops.push_back(embed(a, j, dims));
        basis.orders = {ops};
        basis.reduced_counts = {nc};
    }

    struct Bond {
        int from, to;
        double lambda;
    };
    std::vector<Bond> bonds;
    if (!par.lambda.empty()) {
        for (int j = 0; j < nc; ++j) {
            if (j + 1 == nc && par.coupling == CavityCoupling::OpenChain) continue;
            bonds.push_back({j, (j + 1) % nc, par.lambda[j]});
        }
    }
    const cplx back = literal_hopping ? cplx{1.0, 0.0} : kI;

    const int n = grid.n_steps;
    const double dt = grid.dt;
    KernelField kf;
    kf.init(basis, corr, grid, 0);
    kf.bytes_ = kf.f_.size() * sizeof(cplx);

    auto deriv = [&](const cplx* fv, const std::vector<cplx>& big_f, cplx* d) {
        cplx sum = 0.0;
        for (int j = 0; j < nc; ++j) sum += fv[j];
        for (int j = 0; j < nc; ++j) d[j] = kI * par.omega[j] * fv[j] + big_f[j] * sum;
        for (const auto& b : bonds) {
            d[b.to] += back * b.lambda * fv[b.from];
            d[b.from] += kI * b.lambda * fv[b.to];
        }
    };

    std::vector<cplx> y0(static_cast<std::size_t>(n + 1) * nc, cplx{}), ys, acc, big_f(nc);
    for (int j = 0; j < nc; ++j) y0[j] = 1.0;
    std::copy_n(y0.begin(), nc, kf.f_.begin());
    std::vector<cplx> aw(n + 1), d(nc);
    const double c_stage[4] = {0.0, 0.5, 0.5, 1.0};
    const double b_stage[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};

    for (int i = 0; i < n; ++i) {
        const double t = grid.t(i);
        ys = y0;
        acc = y0;
        for (int st = 0; st < 4; ++st) {
            const double tau = t + c_stage[st] * dt;
            const double hp = tau - t;
            for (int s = 0; s <= i; ++s) {
                const double w = (i == 0) ? 0.0 : ((s == 0 || s == i) ? 0.5 * dt : dt);
                aw[s] = w * corr(tau, grid.t(s));
            }
            aw[i] += 0.5 * hp * corr(tau, t);
            for (int j = 0; j < nc; ++j) {
                cplx v = 0.5 * hp * corr(tau, tau);  // f_j(tau, tau) = 1
                for (int s = 0; s <= i; ++s) v += aw[s] * ys[s * nc + j];
                big_f[j] = v;
            }
            for (int s = 0; s <= i; ++s) {
                deriv(ys.data() + s * nc, big_f, d.data());
                for (int j = 0; j < nc; ++j) {
                    acc[s * nc + j] += b_stage[st] * dt * d[j];
                    if (st < 3) ys[s * nc + j] = y0[s * nc + j] + c_stage[st + 1] * dt * d[j];
                }
            }
        }
        y0 = acc;
        const int ni = i + 1;
        for (int j = 0; j < nc; ++j) y0[ni * nc + j] = 1.0;
        const std::size_t row = static_cast<std::size_t>(ni) * (ni + 1) / 2;
        std::copy_n(y0.begin(), (ni + 1) * nc, kf.f_.begin() + row * nc);

        std::vector<cplx> vals(nc, cplx{});
        const double tn = grid.t(ni);
        for (int s = 0; s <= ni; ++s) {
            const cplx w = ((s == 0 || s == ni) ? 0.5 * dt : dt) * corr(tn, grid.t(s));
            for (int j = 0; j < nc; ++j) vals[j] += w * y0[s * nc + j];
        }
        if (!all_finite(vals)) throw KernelBlowup(tn, "cavity kernel integral non-finite");
        kf.store_big_p(ni, vals, 0);
    }
    return kf;
}

// ------------------------------------------------------------ residual

double consistency_residual(const KernelField& kf, std::span<const cplx> z, int i, int s) {
    const auto& grid = kf.grid();
    if (i < 1 || i >= grid.n_steps || s < 0 || s > i - 1) {
        throw InvalidParameter("consistency_residual needs 1 <= i < n_steps and s < i");
    }
    if (!kf.has_slice(i - 1) || !kf.has_slice(i) || !kf.has_slice(i + 1)) {
        throw InvalidParameter("consistency_residual needs kernel slices at i-1, i, i+1");
    }
    const auto& basis = kf.basis();
    const auto& alg = basis.algebra;
    const double dt = grid.dt;
    const Mat ldag = alg.l.adjoint();

    const Mat lhs = (kf.assemble_o(i + 1, s, z) - kf.assemble_o(i - 1, s, z)) / (2.0 * dt);
    const Mat o = kf.assemble_o(i, s, z);
    const Mat obar = kf.assemble_obar(i, z);

    // dObar/dz_s = sum_k k int P^(k)(t; s, v) z^v dv O^(k)
    Mat dobar = Mat::Zero(alg.dim(), alg.dim());
    std::vector<int> v, full;
    for (int k = 1; k <= kf.k_trunc(); ++k) {
        Vec c = Vec::Zero(kf.count(k));
        v.assign(k - 1, 0);
        do {
            cplx w = multiplicity(v);
            for (int x : v) w *= ((x == 0 || x == i) ? 0.5 * dt : dt) * z[x];
            full = v;
            full.insert(std::upper_bound(full.begin(), full.end(), s), s);
            const auto pv = kf.big_p(k, i, kf.rank(full));
            for (int j = 0; j < kf.count(k); ++j) c(j) += w * pv[j];
        } while (next_tuple(v, i));
        for (int j = 0; j < kf.count(k); ++j) dobar += static_cast<double>(k) * c(j) * basis.orders[k][j];
    }

    const Mat gen = -kI * alg.h + z[i] * alg.l - ldag * obar;
    const Mat rhs = commutator(gen, o) - ldag * dobar;
    return operator_norm(alg.compress(lhs - rhs));
}

} // namespace nmqsd
