// models.hpp — Hilbert spaces, elementary operators and the three model
// families (coupled cavities, a single angular momentum, collective qubits).
#pragma once

#include "nmqsd/linalg.hpp"

#include <string>
#include <variant>
#include <vector>

namespace nmqsd {

struct HilbertSpace {
    int dim{0};
    std::vector<int> factor_dims;

    // Throws InvalidParameter unless dim >= 2 and the factors multiply to dim.
    static HilbertSpace product(std::vector<int> factor_dims);
};

enum class ModelFamily { NCavity, AngularMomentum, NQubit };

std::string to_string(ModelFamily family);

enum class CavityCoupling { Ring, OpenChain };

struct NCavityParams {
    int n_modes{1};
    std::vector<double> omega;
    std::vector<double> lambda;
    int n_max{2};
    CavityCoupling coupling{CavityCoupling::Ring};
};

struct AngularParams {
    int two_l{1};
    double omega{1.0};
    double l() const { return 0.5 * two_l; }
};

struct NQubitParams {
    int n_qubits{1};
    double omega{1.0};
};

// H_sys and L on the space in which operator products are evaluated. For
// bosonic modes this is a Fock space padded by a few levels per mode so that
// products of up to three ladder operators are exact on the physical states;
// for spins and qubits it is the physical space itself.
struct OperatorAlgebra {
    Mat h;
    Mat l;
    std::vector<Eigen::Index> physical;  // algebra index of each physical basis state

    Eigen::Index dim() const { return h.rows(); }
    bool padded() const { return static_cast<Eigen::Index>(physical.size()) != h.rows(); }

    // Restriction of an algebra-space operator to the physical states.
    Mat compress(const Mat& a) const;
};

struct ModelSpec {
    ModelFamily family{ModelFamily::NQubit};
    std::variant<NCavityParams, AngularParams, NQubitParams> params;
    HilbertSpace space;
    Mat h_sys;
    Mat l_op;
    // Number of excitations of each physical basis state; L lowers it by one.
    std::vector<int> excitation;
    OperatorAlgebra algebra;

    int dim() const { return space.dim; }
    std::string describe() const;
};

// ---------------------------------------------------------------- elementary

struct AngularMomentumOps {
    Mat jz;
    Mat jp;
    Mat jm;
};

// Spin-l matrices in the |l,l>, |l,l-1>, ..., |l,-l> basis. Throws
// InvalidParameter unless 2l is a positive integer.
AngularMomentumOps build_angular_momentum(double l);

// Single qubit in the {|0>, |1>} basis with |1> excited: sigma_z = diag(-1, 1)
// and sigma_- = |0><1|.
Mat sigma_z();
Mat sigma_minus();
Mat sigma_plus();

// Truncated annihilation operator on {|0>, ..., |n_max>}.
Mat boson_annihilation(int n_max);

// -------------------------------------------------------------- model builders

// H_sys = omega J_z, L = J_-.
ModelSpec build_angular_model(double l, double omega);

// H_sys = (omega/2) sum_j sigma_z^(j), L = sum_j sigma_-^(j). 1 <= n <= 7.
// Qubit 1 is the leftmost tensor factor.
ModelSpec build_nqubit_model(int n, double omega);

// H_sys = sum_j [omega_j a_j^+ a_j + lambda_j (a_j^+ a_{j+1} + a_j a_{j+1}^+)],
// L = sum_j a_j, with cavity N+1 identified with cavity 1 for Ring coupling.
// An empty lambda list means no hopping. `algebra_margin` is the number of
// extra Fock levels kept per mode in the operator algebra.
ModelSpec build_ncavity_model(int n, const std::vector<double>& omega,
                              const std::vector<double>& lambda, int n_max = 2,
                              CavityCoupling coupling = CavityCoupling::Ring,
                              int algebra_margin = 2);

} // namespace nmqsd
