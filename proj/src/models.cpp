#include "nmqsd/models.hpp"

#include "nmqsd/errors.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace nmqsd {

HilbertSpace HilbertSpace::product(std::vector<int> factor_dims) {
    if (factor_dims.empty()) throw InvalidParameter("HilbertSpace: no tensor factors");
    long long dim = 1;
    for (int d : factor_dims) {
        if (d < 1) throw InvalidParameter("HilbertSpace: factor dimension must be positive");
        dim *= d;
    }
    if (dim < 2) throw InvalidParameter("HilbertSpace: dimension must be at least 2");
    return HilbertSpace{static_cast<int>(dim), std::move(factor_dims)};
}

std::string to_string(ModelFamily family) {
    switch (family) {
        case ModelFamily::NCavity: return "ncavity";
        case ModelFamily::AngularMomentum: return "angular";
        case ModelFamily::NQubit: return "nqubit";
    }
    return "unknown";
}

Mat OperatorAlgebra::compress(const Mat& a) const {
    if (!padded()) return a;
    const auto n = static_cast<Eigen::Index>(physical.size());
    Mat out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = a(physical[i], physical[j]);
    }
    return out;
}

std::string ModelSpec::describe() const {
    std::ostringstream os;
    os << to_string(family) << " dim=" << space.dim;
    if (const auto* p = std::get_if<NQubitParams>(&params)) {
        os << " N=" << p->n_qubits << " omega=" << p->omega;
    } else if (const auto* a = std::get_if<AngularParams>(&params)) {
        os << " l=" << a->l() << " omega=" << a->omega;
    } else if (const auto* c = std::get_if<NCavityParams>(&params)) {
        os << " N=" << c->n_modes << " n_max=" << c->n_max
           << (c->coupling == CavityCoupling::Ring ? " ring" : " open");
    }
    return os.str();
}

// ---------------------------------------------------------------- elementary

AngularMomentumOps build_angular_momentum(double l) {
    const double two_l_real = 2.0 * l;
    const long two_l = std::lround(two_l_real);
    if (two_l < 1 || std::abs(two_l_real - static_cast<double>(two_l)) > 1e-12) {
        throw InvalidParameter("angular momentum quantum number must be a positive half-integer");
    }
    const int d = static_cast<int>(two_l) + 1;
    AngularMomentumOps ops{Mat::Zero(d, d), Mat::Zero(d, d), Mat::Zero(d, d)};
    for (int i = 0; i < d; ++i) {
        const double m = l - i;
        ops.jz(i, i) = m;
        if (i + 1 < d) {
            // J_- |l,m> = sqrt(l(l+1) - m(m-1)) |l,m-1>
            ops.jm(i + 1, i) = std::sqrt(l * (l + 1.0) - m * (m - 1.0));
        }
    }
    ops.jp = ops.jm.adjoint();
    return ops;
}

Mat sigma_z() {
    Mat s = Mat::Zero(2, 2);
    s(0, 0) = -1.0;
    s(1, 1) = 1.0;
    return s;
}

Mat sigma_minus() {
    Mat s = Mat::Zero(2, 2);
    s(0, 1) = 1.0;
    return s;
}

Mat sigma_plus() { return sigma_minus().adjoint(); }

Mat boson_annihilation(int n_max) {
    if (n_max < 1) throw InvalidParameter("boson truncation n_max must be >= 1");
    Mat a = Mat::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

namespace {

void check_hermitian(const Mat& h) {
    const double scale = std::max(1.0, h.norm());
    if (hermiticity_defect(h) > 1e-12 * scale) {
        throw InvalidModel("H_sys is not Hermitian");
    }
}

} // namespace

// -------------------------------------------------------------- model builders

ModelSpec build_angular_model(double l, double omega) {
    const auto ops = build_angular_momentum(l);
    ModelSpec m;
    m.family = ModelFamily::AngularMomentum;
    m.params = AngularParams{static_cast<int>(std::lround(2.0 * l)), omega};
    m.space = HilbertSpace::product({static_cast<int>(ops.jz.rows())});
    m.h_sys = omega * ops.jz;
    m.l_op = ops.jm;
    const int d = m.space.dim;
    m.excitation.resize(d);
    for (int i = 0; i < d; ++i) m.excitation[i] = d - 1 - i;
    m.algebra.h = m.h_sys;
    m.algebra.l = m.l_op;
    m.algebra.physical.resize(d);
    std::iota(m.algebra.physical.begin(), m.algebra.physical.end(), 0);
    check_hermitian(m.h_sys);
    return m;
}

ModelSpec build_nqubit_model(int n, double omega) {
    if (n < 1 || n > 7) throw UnsupportedSize("N-qubit model supports 1 <= N <= 7");
    ModelSpec m;
    m.family = ModelFamily::NQubit;
    m.params = NQubitParams{n, omega};
    m.space = HilbertSpace::product(std::vector<int>(n, 2));
    const int d = m.space.dim;
    m.h_sys = Mat::Zero(d, d);
    m.l_op = Mat::Zero(d, d);
    for (int j = 0; j < n; ++j) {
        m.h_sys += 0.5 * omega * embed(sigma_z(), j, m.space.factor_dims);
        m.l_op += embed(sigma_minus(), j, m.space.factor_dims);
    }
    m.excitation.resize(d);
    for (int i = 0; i < d; ++i) m.excitation[i] = __builtin_popcount(static_cast<unsigned>(i));
    m.algebra.h = m.h_sys;
    m.algebra.l = m.l_op;
    m.algebra.physical.resize(d);
    std::iota(m.algebra.physical.begin(), m.algebra.physical.end(), 0);
    check_hermitian(m.h_sys);
    return m;
}

namespace {

void cavity_operators(int n, const std::vector<double>& omega, const std::vector<double>& lambda,
                      int levels_max, CavityCoupling coupling, Mat& h, Mat& l) {
    const std::vector<int> dims(n, levels_max + 1);
    const Mat a = boson_annihilation(levels_max);
    std::vector<Mat> modes;
    modes.reserve(n);
    for (int j = 0; j < n; ++j) modes.push_back(embed(a, j, dims));
    const auto dim = modes.front().rows();
    h = Mat::Zero(dim, dim);
    l = Mat::Zero(dim, dim);
    for (int j = 0; j < n; ++j) {
        h += omega[j] * modes[j].adjoint() * modes[j];
        l += modes[j];
        const bool wraps = (j + 1 == n);
        if (lambda.empty() || (wraps && coupling == CavityCoupling::OpenChain)) continue;
        const Mat& next = modes[(j + 1) % n];
        h += lambda[j] * (modes[j].adjoint() * next + modes[j] * next.adjoint());
    }
}

} // namespace

ModelSpec build_ncavity_model(int n, const std::vector<double>& omega,
                              const std::vector<double>& lambda, int n_max,
                              CavityCoupling coupling, int algebra_margin) {
    if (n < 1) throw InvalidParameter("N-cavity model needs at least one cavity");
    if (static_cast<int>(omega.size()) != n) {
        throw InvalidParameter("N-cavity model: omega list must have length N");
    }
    if (!lambda.empty() && static_cast<int>(lambda.size()) != n) {
        throw InvalidParameter("N-cavity model: lambda list must have length N (or be empty)");
    }
    if (n_max < 1) throw InvalidParameter("N-cavity model: n_max must be >= 1");
    if (algebra_margin < 2) throw InvalidParameter("N-cavity model: algebra margin must be >= 2");

    ModelSpec m;
    m.family = ModelFamily::NCavity;
    m.params = NCavityParams{n, omega, lambda, n_max, coupling};
    m.space = HilbertSpace::product(std::vector<int>(n, n_max + 1));
    cavity_operators(n, omega, lambda, n_max, coupling, m.h_sys, m.l_op);

    const int d = m.space.dim;
    m.excitation.assign(d, 0);
    const int ext = n_max + algebra_margin;
    m.algebra.physical.resize(d);
    for (int i = 0; i < d; ++i) {
        int rest = i;
        Eigen::Index ext_index = 0;
        Eigen::Index stride = 1;
        int total = 0;
        for (int j = n - 1; j >= 0; --j) {
            const int occ = rest % (n_max + 1);
            rest /= (n_max + 1);
            total += occ;
            ext_index += occ * stride;
            stride *= (ext + 1);
        }
        m.excitation[i] = total;
        m.algebra.physical[i] = ext_index;
    }
    cavity_operators(n, omega, lambda, ext, coupling, m.algebra.h, m.algebra.l);
    check_hermitian(m.h_sys);
    return m;
}

} // namespace nmqsd
