#include "nmqsd/linalg.hpp"

#include "nmqsd/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace nmqsd {

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Mat embed(const Mat& op, std::size_t site, const std::vector<int>& factor_dims) {
    if (site >= factor_dims.size()) {
        throw InvalidParameter("embed: site index out of range");
    }
    if (op.rows() != factor_dims[site] || op.cols() != factor_dims[site]) {
        throw InvalidParameter("embed: operator does not match factor dimension");
    }
    Mat out = Mat::Identity(1, 1);
    for (std::size_t k = 0; k < factor_dims.size(); ++k) {
        out = kron(out, k == site ? op : Mat::Identity(factor_dims[k], factor_dims[k]));
    }
    return out;
}

double hermiticity_defect(const Mat& a) { return (a - a.adjoint()).norm(); }

double operator_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues()(0);
}

Mat hermitian_part(const Mat& a) { return 0.5 * (a + a.adjoint()); }

Mat psd_sqrt(const Mat& a, double clip) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(a));
    if (es.info() != Eigen::Success) {
        throw InvalidState("psd_sqrt: eigendecomposition failed");
    }
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -clip) {
            throw InvalidState("psd_sqrt: matrix has eigenvalue " + std::to_string(ev(i)) +
                               " below -" + std::to_string(clip));
        }
        ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

double trace_distance(const Mat& a, const Mat& b) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(a - b), Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

} // namespace nmqsd
