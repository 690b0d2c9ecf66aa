#include "nmqsd/errors.hpp"
#include "nmqsd/observables.hpp"

#include <doctest.h>

#include <sstream>

using namespace nmqsd;

TEST_CASE("Uhlmann fidelity") {
    Vec a(2), b(2);
    a << 1, 0;
    b << 0, 1;
    const Mat pa = a * a.adjoint(), pb = b * b.adjoint();
    CHECK(std::abs(fidelity(pa, pa) - 1.0) < 1e-12);
    CHECK(std::abs(fidelity(pa, pb)) < 1e-12);
    const Mat mixed = Mat::Identity(2, 2) / 2.0;
    CHECK(std::abs(fidelity(pa, mixed) - 0.5) < 1e-12);
    // commuting states: (sum sqrt(p q))^2
    Mat r = Mat::Zero(2, 2), s = Mat::Zero(2, 2);
    r(0, 0) = 0.2, r(1, 1) = 0.8, s(0, 0) = 0.6, s(1, 1) = 0.4;
    const double expect = std::pow(std::sqrt(0.12) + std::sqrt(0.32), 2);
    CHECK(std::abs(fidelity(r, s) - expect) < 1e-12);
    CHECK(std::abs(fidelity(s, r) - expect) < 1e-12);
    Mat bad = pa;
    bad(0, 0) = -0.5;
    bad(1, 1) = 1.5;
    CHECK_THROWS_AS(fidelity(bad, pa), InvalidState);
}

TEST_CASE("Werner states") {
    const Mat w0 = werner_state(0.0);
    CHECK(w0.rows() == 8);
    CHECK(std::abs(w0.trace() - 1.0) < 1e-14);
    CHECK(std::abs(w0(4, 4).real() - 1.0 / 3.0) < 1e-14);
    CHECK(std::abs(w0(4, 2).real() - 1.0 / 3.0) < 1e-14);
    CHECK(std::abs(w0(1, 1).real() - 1.0 / 3.0) < 1e-14);
    CHECK(std::abs(w0(0, 0)) < 1e-14);
    CHECK((werner_state(1.0) - Mat::Identity(8, 8) / 8.0).norm() < 1e-14);
    CHECK(std::abs(fidelity(w0, w0) - 1.0) < 1e-10);
}

TEST_CASE("coherences, populations and the observable CSV") {
    Mat r(2, 2);
    r << 0.25, cplx(0.3, 0.4), cplx(0.3, -0.4), 0.75;
    const auto s = exact_series(TimeGrid{0.5, 1}, {r, r});
    const auto c = coherence(s, 1, 2);
    CHECK(c.name == "|rho_12|");
    CHECK(std::abs(c.values[0] - 0.5) < 1e-15);
    const auto p = population(s, 2);
    CHECK(p.values[1] == 0.75);
    std::ostringstream os;
    write_observables_csv(os, s.grid, {p}, false);
    CHECK(os.str() == "t,rho_22\n0,0.75\n0.5,0.75\n");
    CHECK_THROWS(coherence(s, 0, 1));
    CHECK(max_trace_distance(s, s) == 0.0);
}
