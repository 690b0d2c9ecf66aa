// obasis.hpp — time-independent basis operators of the noise expansion
//
//   O(t,s,z) = sum_k sum_j [ int p_j^(k)(t,s,s_1..s_k) z_{s_1}..z_{s_k} ds ] O_j^(k)
//
// Each order k holds an orthonormal (Frobenius, on the physical states) set
// of operators. Bases come either from the closed forms known for each model
// family or from a numerical commutator closure seeded with L.
#pragma once

#include "nmqsd/linalg.hpp"
#include "nmqsd/models.hpp"

#include <array>
#include <vector>

namespace nmqsd {

struct OBasis {
    ModelFamily family{ModelFamily::NQubit};
    OperatorAlgebra algebra;
    // orders[k][j]: O_j^(k) on the algebra space.
    std::vector<std::vector<Mat>> orders;
    // Per-order counts of the symmetry-reduced (collective) basis. Equal to
    // counts() unless the basis is a site-resolved listing.
    std::vector<int> reduced_counts;
    // True when the closure produced a non-zero operator above k_max that was
    // dropped.
    bool truncated_above{false};

    int k_max() const { return static_cast<int>(orders.size()) - 1; }
    int size(int k) const { return static_cast<int>(orders[k].size()); }
    std::vector<int> counts() const;
    int total() const;
    // O_j^(k) restricted to the physical space.
    Mat physical(int k, int j) const { return algebra.compress(orders[k][j]); }
};

struct ClosureOptions {
    double tol{1e-10};
    // Bound on the total number of basis operators before giving up.
    int max_operators{8192};
    // Order-0 seeds; {L} when empty.
    std::vector<Mat> seeds;
};

// Fixed-point closure under the maps generated by the O-operator equation:
//   X -> [H, X]              (order k -> k)
//   X -> [L, X]              (order k -> k+1)
//   X -> L^dagger X          (order k -> k-1, functional-derivative term)
//   (B, X) -> [L^dagger B, X], [L^dagger X, B]   (orders m, k -> m+k)
// A candidate joins its order only if it raises the rank of that order's span.
OBasis closure_discover(const OperatorAlgebra& algebra, int k_max, const ClosureOptions& opts = {});
OBasis closure_discover(const Mat& h, const Mat& l, int k_max, const ClosureOptions& opts = {});

// {a_1, ..., a_N}; the O-operator of coupled cavities is noise-free.
OBasis basis_ncavity(const ModelSpec& model);

// O_j^(k) = J_z^(j-1) J_-^(k+1), k = 0..2l-1, j = 1..2l-k.
OBasis basis_angular(const ModelSpec& model);

enum class QubitBasisVariant {
    Collective,    // closure seeded with L; per-order counts equal m(N,k)
    SiteResolved,  // closure seeded with each sigma_-^(j); for N = 2 the
                   // listing sigma_-^A, sigma_-^B, sigma_z^A sigma_-^B,
                   // sigma_-^A sigma_z^B | sigma_-^A sigma_-^B
};

OBasis basis_nqubit(const ModelSpec& model, QubitBasisVariant variant = QubitBasisVariant::Collective);

// Default basis for any model family.
OBasis basis_for(const ModelSpec& model);

// m(N,k) from the recurrences m(N,k) = m(N-1,k-1), m(N,0) = m(N-2,0) + N,
// m(1,0) = 1 (and m(0,0) = 0).
int qubit_basis_count(int n, int k);

// The published count table, rows N = 1..7, columns k = 0..6.
const std::array<std::array<int, 7>, 7>& qubit_count_table();

// Largest relative residual of projecting each operator of one list onto the
// span of the other (both directions). Zero when the spans coincide.
double span_residual(const std::vector<Mat>& a, const std::vector<Mat>& b,
                     const OperatorAlgebra& algebra);

// Numerical rank of the Gram matrix of the (compressed) operators, threshold
// relative to the largest singular value.
int gram_rank(const std::vector<Mat>& ops, const OperatorAlgebra& algebra, double tol = 1e-10);

} // namespace nmqsd
