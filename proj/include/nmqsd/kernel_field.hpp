// kernel_field.hpp — coefficient functions of the O-operator expansion
//
//   O(t,s,z) = sum_k sum_j int p_j^(k)(t,s,u_1..u_k) z_{u_1}..z_{u_k} du  O_j^(k)
//   Obar(t,z) = int_0^t alpha(t,s) O(t,s,z) ds
//             = sum_k sum_j int P_j^(k)(t,u_1..u_k) z_{u_1}..z_{u_k} du  O_j^(k)
//
// The p tables evolve in t by RK4 (noise never enters); the z_t commutator
// term of the O-equation becomes the boundary value of order k+1 at u_i = t.
// Kernels are stored symmetric in (u_1..u_k), indexed by the colex rank of
// the sorted tuple, rank(u) = sum_l C(u_l + l - 1, l).
#pragma once

#include "nmqsd/correlation.hpp"
#include "nmqsd/obasis.hpp"

#include <map>
#include <span>
#include <vector>

namespace nmqsd {

// Structure constants of the O-equation in the basis, truncated at k_trunc.
//   hmap[k]      : [-iH, O_b^(k)]              -> order k
//   raise[k]     : [L, O_b^(k-1)]              -> order k       (k >= 1)
//   lower[k]     : L^dagger O_b^(k+1)          -> order k       (k < k_trunc)
//   comm[m][q][a]: [L^dagger O_a^(m), O_b^(q)] -> order m+q     (m+q <= k_trunc)
// Each map is a (count_out x count_in) matrix of expansion coefficients.
struct ProjectedRhs {
    int k_trunc{0};
    std::vector<int> counts;
    std::vector<Mat> hmap;
    std::vector<Mat> raise;
    std::vector<Mat> lower;
    std::vector<std::vector<std::vector<Mat>>> comm;
    Vec l_coeffs;  // L in the order-0 basis
    double max_residual{0.0};
};

// Least-squares projection of every product onto the basis. Throws
// BasisIncomplete if any relative projection residual exceeds `tol`.
ProjectedRhs derive_projected_rhs(const OBasis& basis, int k_trunc, double tol = 1e-9);

// Binomial coefficients C(a, b) for a < rows, b < cols.
class Binomial {
public:
    Binomial() = default;
    Binomial(int rows, int cols);
    std::size_t operator()(int a, int b) const {
        return (a < 0 || b < 0 || b > a) ? 0 : table_[static_cast<std::size_t>(a) * cols_ + b];
    }

private:
    int cols_{0};
    std::vector<std::size_t> table_;
};

struct KernelOptions {
    int k_trunc{-1};                 // -1: the basis maximum
    double memory_cap_bytes{3.0e9};
    std::vector<int> snapshot_steps; // keep full p slices at these steps
};

class KernelField {
public:
    const OBasis& basis() const { return basis_; }
    const TimeGrid& grid() const { return grid_; }
    const CorrelationFunction& correlation() const { return corr_; }
    int k_trunc() const { return k_trunc_; }
    int count(int k) const { return counts_[k]; }
    std::size_t bytes_estimate() const { return bytes_; }

    // Number of symmetric tuples of size k with entries in [0, i].
    std::size_t tuples(int k, int i) const { return binom_(i + k, k); }
    std::size_t rank(std::span<const int> sorted_tuple) const;

    // f_j(t_i, t_s), s <= i.
    std::span<const cplx> f(int i, int s) const;
    // P_j^(k)(t_i, u) for the tuple of colex rank r (entries <= i).
    std::span<const cplx> big_p(int k, int i, std::size_t r) const;

    // Expansion coefficients of the order-k noise integral of Obar at t_i as
    // a polynomial in the endpoint value x = z(t_i):
    //   sum_r coeffs[r] x^r,  r = 0..k.
    // `z` supplies z(t_0..t_{i-1}); only those entries are read.
    void endpoint_polynomial(int k, int i, std::span<const cplx> z, std::vector<Vec>& coeffs) const;

    // Obar coefficient vectors for every order at t_i along the path.
    std::vector<Vec> obar_coefficients(int i, std::span<const cplx> z) const;

    // Obar(t_i, z) as an algebra-space operator.
    Mat assemble_obar(int i, std::span<const cplx> z) const;

    // Full slices (all orders) kept for the requested steps.
    bool has_slice(int i) const { return slices_.count(i) != 0 || k_trunc_ == 0; }
    std::span<const cplx> p(int k, int i, int s, std::size_t r) const;

    // O(t_i, t_s, z) as an algebra-space operator (needs a slice at i).
    Mat assemble_o(int i, int s, std::span<const cplx> z) const;

    // Dump of the order-0 table: rows t,s,j,re_f,im_f.
    void write_order0_csv(std::ostream& os) const;

private:
    friend KernelField propagate_kernels(const OBasis&, const CorrelationFunction&, const TimeGrid&,
                                         const KernelOptions&);
    friend KernelField propagate_ncavity_kernels(const ModelSpec&, const CorrelationFunction&,
                                                 const TimeGrid&, bool);

    void init(const OBasis& basis, const CorrelationFunction& corr, const TimeGrid& grid, int k_trunc);
    void store_big_p(int i, std::span<const cplx> values_for_order, int k);
    std::size_t p_offset(int k, int i) const { return binom_(i + k, k + 1) * counts_[k]; }

    OBasis basis_;
    CorrelationFunction corr_{CorrelationFunction::ornstein_uhlenbeck(1.0)};
    TimeGrid grid_;
    int k_trunc_{0};
    std::vector<int> counts_;
    Binomial binom_;
    std::size_t bytes_{0};

    std::vector<cplx> f_;                   // order-0 table, triangular in (i, s)
    std::vector<std::vector<cplx>> big_p_;  // [k]: blocks per t_i
    std::vector<std::vector<cplx>> p_hat_;  // [k]: multiplicity- and weight-folded big_p
    std::map<int, std::vector<std::vector<cplx>>> slices_;  // step -> [k] slice
};

// Generic propagation from the projected structure constants.
KernelField propagate_kernels(const OBasis& basis, const CorrelationFunction& corr,
                              const TimeGrid& grid, const KernelOptions& opts = {});

// Coupled-cavity coefficients f_j(t,s) in the raw basis {a_1..a_N}:
//   d/dt f_j = i(w_j f_j + l_{j-1} f_{j-1} + l_j f_{j+1}) + F_j sum_k f_k,
//   F_j(t) = int_0^t alpha(t,s) f_j(t,s) ds,  f_j(s,s) = 1.
// `literal_hopping` drops the i on the l_{j-1} term (the form printed for
// N = 3), kept only to show that it violates the O-equation.
KernelField propagate_ncavity_kernels(const ModelSpec& model, const CorrelationFunction& corr,
                                      const TimeGrid& grid, bool literal_hopping = false);

// Operator-norm residual of the O-equation at (t_i, t_s) along the path z:
//   dO/dt - ([-iH + L z_t - L^dagger Obar, O] - L^dagger dObar/dz_s)
// with dO/dt by central differences; needs slices at i-1, i, i+1.
double consistency_residual(const KernelField& kernels, std::span<const cplx> z, int i, int s);

} // namespace nmqsd
