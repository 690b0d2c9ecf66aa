#include "nmqsd/obasis.hpp"

#include "nmqsd/errors.hpp"

#include <cmath>
#include <Eigen/SparseCore>

#include <deque>
#include <numeric>
#include <sstream>

namespace nmqsd {

std::vector<int> OBasis::counts() const {
    std::vector<int> c;
    c.reserve(orders.size());
    for (const auto& o : orders) c.push_back(static_cast<int>(o.size()));
    return c;
}

int OBasis::total() const {
    const auto c = counts();
    return std::accumulate(c.begin(), c.end(), 0);
}

namespace {

// Gram-Schmidt step in the compressed Frobenius product. Returns true and
// appends the normalized remainder when `x` is independent of `span`.
bool ortho_append(std::vector<Mat>& span, const Mat& x, const OperatorAlgebra& alg, double tol) {
    if (!alg.padded()) {
        // physical space is the algebra space: no restriction needed
        Mat rem = x;
        const double norm_x = x.norm();
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : span) rem -= frobenius_inner(b, rem) * b;
        }
        const double norm_rem = rem.norm();
        if (norm_rem <= tol * std::max(1.0, norm_x)) return false;
        span.push_back(rem / norm_rem);
        return true;
    }
    Mat rem = x;
    const double norm_x = alg.compress(x).norm();
    // two passes of classical Gram-Schmidt
    for (int pass = 0; pass < 2; ++pass) {
        const Mat crem = alg.compress(rem);
        for (const auto& b : span) {
            const cplx c = frobenius_inner(alg.compress(b), crem);
            rem -= c * b;
        }
    }
    const double norm_rem = alg.compress(rem).norm();
    if (norm_rem <= tol * std::max(1.0, norm_x)) return false;
    span.push_back(rem / norm_rem);
    return true;
}

std::vector<Mat> orthonormalize(const std::vector<Mat>& ops, const OperatorAlgebra& alg) {
    std::vector<Mat> out;
    for (const auto& op : ops) {
        if (!ortho_append(out, op, alg, 1e-10)) {
            throw BasisMismatch("basis operators are linearly dependent");
        }
    }
    return out;
}

OperatorAlgebra plain_algebra(const Mat& h, const Mat& l) {
    OperatorAlgebra alg{h, l, {}};
    alg.physical.resize(h.rows());
    std::iota(alg.physical.begin(), alg.physical.end(), 0);
    return alg;
}

using SpMat = Eigen::SparseMatrix<cplx>;

// Gram-Schmidt against a sparse orthonormal span. `mask` selects the
// physical entries of the algebra space (all ones when unpadded).
bool ortho_append_sparse(std::vector<Mat>& span, std::vector<SpMat>& sparse_span, const Mat& x,
                         const Eigen::MatrixXd& mask, double tol) {
    Mat rem = x.cwiseProduct(mask.cast<cplx>());
    const double norm_x = rem.norm();
    std::vector<cplx> coef(sparse_span.size(), cplx{});
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < sparse_span.size(); ++i) {
            const auto& b = sparse_span[i];
            cplx c{};
            for (int col = 0; col < b.outerSize(); ++col) {
                for (SpMat::InnerIterator it(b, col); it; ++it) c += std::conj(it.value()) * rem(it.row(), it.col());
            }
            for (int col = 0; col < b.outerSize(); ++col) {
                for (SpMat::InnerIterator it(b, col); it; ++it) rem(it.row(), it.col()) -= c * it.value();
            }
            coef[i] += c;
        }
    }
    const double norm_rem = rem.norm();
    if (norm_rem <= tol * std::max(1.0, norm_x)) return false;
    // same combination on the whole algebra space
    Mat full = x;
    for (std::size_t i = 0; i < span.size(); ++i) full -= coef[i] * span[i];
    span.push_back(full / norm_rem);
    const Mat masked = span.back().cwiseProduct(mask.cast<cplx>());
    const double cut = 1e-15 * std::max(1.0, masked.cwiseAbs().maxCoeff());
    sparse_span.push_back(SpMat(masked.sparseView(1.0, cut)));
    return true;
}

} // namespace

// ------------------------------------------------------------------ closure

OBasis closure_discover(const OperatorAlgebra& alg, int k_max, const ClosureOptions& opts) {
    if (k_max < 0) throw InvalidParameter("closure: k_max must be non-negative");
    if (alg.physical.size() > 128) throw UnsupportedSize("closure: dimension above 128");

    OBasis basis;
    basis.algebra = alg;
    basis.orders.assign(k_max + 1, {});

    // Ladder-type operators are block sparse; products run in sparse form.
    auto sparse = [](const Mat& m) {
        const double cut = 1e-15 * std::max(1.0, m.cwiseAbs().maxCoeff());
        return SpMat(m.sparseView(1.0, cut));
    };
    auto comm = [](const SpMat& a, const SpMat& b) { return SpMat(a * b - b * a); };
    const SpMat h = sparse(alg.h);
    const SpMat l = sparse(alg.l);
    const SpMat ldag = SpMat(l.adjoint());

    std::vector<std::vector<SpMat>> ops(k_max + 1), ldag_times(k_max + 1), masked(k_max + 1);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(alg.dim(), alg.dim());
    for (auto a : alg.physical) {
        for (auto b : alg.physical) mask(a, b) = 1.0;
    }
    std::deque<std::pair<int, int>> work;
    int accepted = 0;

    auto offer = [&](const SpMat& xs, int k) {
        if (k < 0) return;
        const Mat x(xs);
        if (k > k_max) {
            if (alg.compress(x).norm() > opts.tol * std::max(1.0, x.norm())) {
                basis.truncated_above = true;
            }
            return;
        }
        if (ortho_append_sparse(basis.orders[k], masked[k], x, mask, opts.tol)) {
            ops[k].push_back(sparse(basis.orders[k].back()));
            ldag_times[k].push_back(SpMat(ldag * ops[k].back()));
            work.emplace_back(k, static_cast<int>(ops[k].size()) - 1);
            if (++accepted > opts.max_operators) {
                throw ClosureDiverged("closure exceeded " + std::to_string(opts.max_operators) +
                                      " operators without reaching a fixed point");
            }
        }
    };

    if (opts.seeds.empty()) {
        offer(l, 0);
    } else {
        for (const auto& s : opts.seeds) offer(sparse(s), 0);
    }

    while (!work.empty()) {
        const auto [k, j] = work.front();
        work.pop_front();
        const SpMat x = ops[k][j];
        const SpMat ldag_x = ldag_times[k][j];
        offer(comm(h, x), k);
        offer(comm(l, x), k + 1);
        offer(ldag_x, k - 1);
        for (int m = 0; m <= k_max; ++m) {
            if (m + k > k_max) {
                // only needed to flag truncation; one witness suffices
                if (!basis.truncated_above && !ops[m].empty()) offer(comm(ldag_times[m][0], x), m + k);
                continue;
            }
            // snapshot the size: operators added during this sweep are
            // paired with x when they are processed themselves
            const auto count = ops[m].size();
            for (std::size_t b = 0; b < count; ++b) {
                offer(comm(ldag_times[m][b], x), m + k);
                offer(comm(ldag_x, ops[m][b]), m + k);
            }
        }
    }
    basis.reduced_counts = basis.counts();
    return basis;
}

OBasis closure_discover(const Mat& h, const Mat& l, int k_max, const ClosureOptions& opts) {
    return closure_discover(plain_algebra(h, l), k_max, opts);
}

// --------------------------------------------------------- closed-form bases

OBasis basis_ncavity(const ModelSpec& model) {
    if (model.family != ModelFamily::NCavity) {
        throw InvalidModel("basis_ncavity needs an N-cavity model");
    }
    const auto& p = std::get<NCavityParams>(model.params);
    // per-mode dimension of the padded algebra space
    const int ext = static_cast<int>(std::lround(
        std::pow(static_cast<double>(model.algebra.dim()), 1.0 / p.n_modes))) - 1;
    const std::vector<int> dims(p.n_modes, ext + 1);
    const Mat a = boson_annihilation(ext);
    std::vector<Mat> ops;
    for (int j = 0; j < p.n_modes; ++j) ops.push_back(embed(a, j, dims));

    OBasis basis;
    basis.family = model.family;
    basis.algebra = model.algebra;
    basis.orders = {orthonormalize(ops, model.algebra)};
    basis.reduced_counts = basis.counts();
    return basis;
}

OBasis basis_angular(const ModelSpec& model) {
    if (model.family != ModelFamily::AngularMomentum) {
        throw InvalidModel("basis_angular needs an angular-momentum model");
    }
    const auto& p = std::get<AngularParams>(model.params);
    const auto ops = build_angular_momentum(p.l());
    const int two_l = p.two_l;

    OBasis basis;
    basis.family = model.family;
    basis.algebra = model.algebra;
    Mat jm_power = ops.jm;  // J_-^(k+1)
    for (int k = 0; k <= two_l - 1; ++k) {
        std::vector<Mat> order;
        Mat jz_power = Mat::Identity(ops.jz.rows(), ops.jz.cols());
        for (int j = 1; j <= two_l - k; ++j) {
            order.push_back(jz_power * jm_power);
            jz_power = jz_power * ops.jz;
        }
        basis.orders.push_back(orthonormalize(order, model.algebra));
        jm_power = jm_power * ops.jm;
    }
    basis.reduced_counts = basis.counts();
    return basis;
}

const std::array<std::array<int, 7>, 7>& qubit_count_table() {
    static const std::array<std::array<int, 7>, 7> table{{
        {1, 0, 0, 0, 0, 0, 0},
        {2, 1, 0, 0, 0, 0, 0},
        {4, 2, 1, 0, 0, 0, 0},
        {6, 4, 2, 1, 0, 0, 0},
        {9, 6, 4, 2, 1, 0, 0},
        {12, 9, 6, 4, 2, 1, 0},
        {16, 12, 9, 6, 4, 2, 1},
    }};
    return table;
}

int qubit_basis_count(int n, int k) {
    if (n <= 0 || k < 0 || k >= n) return 0;
    if (k > 0) return qubit_basis_count(n - 1, k - 1);
    if (n == 1) return 1;
    return qubit_basis_count(n - 2, 0) + n;
}

OBasis basis_nqubit(const ModelSpec& model, QubitBasisVariant variant) {
    if (model.family != ModelFamily::NQubit) {
        throw InvalidModel("basis_nqubit needs an N-qubit model");
    }
    const int n = std::get<NQubitParams>(model.params).n_qubits;
    std::vector<int> expected(n);
    for (int k = 0; k < n; ++k) expected[k] = qubit_count_table()[n - 1][k];

    if (variant == QubitBasisVariant::Collective) {
        OBasis basis = closure_discover(model.algebra, n - 1);
        basis.family = model.family;
        if (basis.counts() != expected || basis.truncated_above) {
            std::ostringstream os;
            os << "closure counts for N=" << n << " do not match the expected table:";
            for (int c : basis.counts()) os << ' ' << c;
            throw BasisMismatch(os.str());
        }
        return basis;
    }

    const auto& dims = model.space.factor_dims;
    OBasis basis;
    if (n == 2) {
        const Mat sm_a = embed(sigma_minus(), 0, dims);
        const Mat sm_b = embed(sigma_minus(), 1, dims);
        const Mat sz_a = embed(sigma_z(), 0, dims);
        const Mat sz_b = embed(sigma_z(), 1, dims);
        basis.algebra = model.algebra;
        basis.orders = {orthonormalize({sm_a, sm_b, sz_a * sm_b, sm_a * sz_b}, model.algebra),
                        orthonormalize({sm_a * sm_b}, model.algebra)};
    } else {
        ClosureOptions opts;
        for (int j = 0; j < n; ++j) opts.seeds.push_back(embed(sigma_minus(), j, dims));
        basis = closure_discover(model.algebra, n - 1, opts);
    }
    basis.family = model.family;
    basis.reduced_counts = expected;
    return basis;
}

OBasis basis_for(const ModelSpec& model) {
    switch (model.family) {
        case ModelFamily::NCavity: return basis_ncavity(model);
        case ModelFamily::AngularMomentum: return basis_angular(model);
        case ModelFamily::NQubit: return basis_nqubit(model);
    }
    throw InvalidModel("unknown model family");
}

// ------------------------------------------------------------- diagnostics

double span_residual(const std::vector<Mat>& a, const std::vector<Mat>& b,
                     const OperatorAlgebra& alg) {
    auto one_way = [&](const std::vector<Mat>& from, const std::vector<Mat>& onto) {
        std::vector<Mat> ortho;
        for (const auto& o : onto) ortho_append(ortho, o, alg, 1e-12);
        double worst = 0.0;
        for (const auto& x : from) {
            const Mat cx = alg.compress(x);
            Mat rem = cx;
            for (const auto& q : ortho) {
                const Mat cq = alg.compress(q);
                rem -= frobenius_inner(cq, rem) * cq;
            }
            const double nx = cx.norm();
            if (nx > 0.0) worst = std::max(worst, rem.norm() / nx);
        }
        return worst;
    };
    return std::max(one_way(a, b), one_way(b, a));
}

int gram_rank(const std::vector<Mat>& ops, const OperatorAlgebra& alg, double tol) {
    if (ops.empty()) return 0;
    const auto n = static_cast<Eigen::Index>(ops.size());
    Mat gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            gram(i, j) = frobenius_inner(alg.compress(ops[i]), alg.compress(ops[j]));
        }
    }
    Eigen::JacobiSVD<Mat> svd(gram);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol * sv(0)) ++rank;
    }
    return rank;
}

} // namespace nmqsd
