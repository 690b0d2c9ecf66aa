// linalg.hpp — dense complex matrix helpers shared by every module
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace nmqsd {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

Mat kron(const Mat& a, const Mat& b);

// Embed a single-factor operator at position `site` of a tensor product with
// the given factor dimensions (site 0 is the leftmost factor).
Mat embed(const Mat& op, std::size_t site, const std::vector<int>& factor_dims);

inline Mat commutator(const Mat& a, const Mat& b) { return a * b - b * a; }

// ||A - A^dagger||_F
double hermiticity_defect(const Mat& a);

// Spectral (operator 2-) norm.
double operator_norm(const Mat& a);

// Hermitian part (A + A^dagger)/2.
Mat hermitian_part(const Mat& a);

// Principal square root of a Hermitian positive semidefinite matrix.
// Eigenvalues in [-clip, 0) are set to zero; anything below -clip throws
// InvalidState.
Mat psd_sqrt(const Mat& a, double clip = 1e-8);

// (1/2) ||A - B||_1 for Hermitian A, B.
double trace_distance(const Mat& a, const Mat& b);

// Frobenius inner product <A, B> = Tr(A^dagger B).
inline cplx frobenius_inner(const Mat& a, const Mat& b) {
    return (a.conjugate().cwiseProduct(b)).sum();
}

} // namespace nmqsd
