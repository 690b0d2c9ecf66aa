#include "nmqsd/errors.hpp"
#include "nmqsd/models.hpp"

#include <doctest.h>

using namespace nmqsd;

TEST_CASE("spin-1/2 angular momentum matrices") {
    const auto j = build_angular_momentum(0.5);
    CHECK(j.jz.rows() == 2);
    CHECK(std::abs(j.jz(0, 0) - 0.5) < 1e-15);
    CHECK(std::abs(j.jz(1, 1) + 0.5) < 1e-15);
    CHECK(std::abs(j.jm(1, 0) - 1.0) < 1e-15);
    CHECK(std::abs(j.jm(0, 1)) < 1e-15);
}

TEST_CASE("ladder algebra [Jz, J-] = -J-") {
    for (double l : {0.5, 1.0, 1.5, 2.0, 3.5}) {
        const auto j = build_angular_momentum(l);
        CHECK(j.jz.rows() == static_cast<int>(2 * l + 1));
        CHECK((commutator(j.jz, j.jm) + j.jm).norm() < 1e-14);
        CHECK((commutator(j.jz, j.jp) - j.jp).norm() < 1e-14);
        CHECK((j.jp - j.jm.adjoint()).norm() < 1e-15);
    }
    CHECK_THROWS_AS(build_angular_momentum(0.7), InvalidParameter);
    CHECK_THROWS_AS(build_angular_momentum(0.0), InvalidParameter);
}

TEST_CASE("qubit model: collective L and excitation numbers") {
    const ModelSpec m = build_nqubit_model(3, 0.8);
    CHECK(m.dim() == 8);
    Mat l = Mat::Zero(8, 8);
    for (std::size_t s = 0; s < 3; ++s) l += embed(sigma_minus(), s, {2, 2, 2});
    CHECK((m.l_op - l).norm() < 1e-15);
    CHECK(m.excitation[0] == 0);
    CHECK(m.excitation[7] == 3);
    CHECK(m.excitation[4] == 1);  // |100>
    CHECK(hermiticity_defect(m.h_sys) < 1e-15);
    CHECK_THROWS_AS(build_nqubit_model(8, 1.0), UnsupportedSize);
}

TEST_CASE("angular model H = w Jz, L = J-") {
    const ModelSpec m = build_angular_model(1.5, 0.3);
    const auto j = build_angular_momentum(1.5);
    CHECK((m.h_sys - 0.3 * j.jz).norm() < 1e-15);
    CHECK((m.l_op - j.jm).norm() < 1e-15);
    CHECK(m.excitation[0] == 3);
    CHECK(m.excitation[3] == 0);
}

TEST_CASE("cavity model hopping and padded algebra") {
    const ModelSpec m = build_ncavity_model(3, {0.5, 0.7, 0.9}, {0.2, 0.3, 0.4}, 1);
    CHECK(m.dim() == 8);
    CHECK(hermiticity_defect(m.h_sys) < 1e-14);
    CHECK(m.algebra.padded());
    // the physical restriction of the algebra-space L is the physical L
    CHECK((m.algebra.compress(m.algebra.l) - m.l_op).norm() < 1e-14);
    // sum_j a_j^+ a_j commutes with H
    const Mat a = boson_annihilation(1);
    Mat n_tot = Mat::Zero(8, 8);
    for (std::size_t s = 0; s < 3; ++s) n_tot += embed(Mat(a.adjoint() * a), s, {2, 2, 2});
    CHECK(commutator(m.h_sys, n_tot).norm() < 1e-14);
}

TEST_CASE("tensor helpers") {
    const Mat x = (Mat(2, 2) << 0, 1, 1, 0).finished();
    const Mat id = Mat::Identity(2, 2);
    CHECK((kron(x, id) - embed(x, 0, {2, 2})).norm() < 1e-15);
    CHECK((kron(id, x) - embed(x, 1, {2, 2})).norm() < 1e-15);
    CHECK(std::abs(trace_distance(Mat::Identity(2, 2) / 2.0, (Mat(2, 2) << 1, 0, 0, 0).finished()) - 0.5) < 1e-15);
}
