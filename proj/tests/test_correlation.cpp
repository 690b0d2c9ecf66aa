#include "nmqsd/correlation.hpp"
#include "nmqsd/errors.hpp"

#include <doctest.h>

using namespace nmqsd;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of (seed, stream, domain, index)") {
    const RngStream a(5, 9), b(5, 9), c(5, 10), d(5, 9, RngDomain::InitialState);
    CHECK(a.complex_normal(3) == b.complex_normal(3));
    CHECK(a.complex_normal(3) != c.complex_normal(3));
    CHECK(a.complex_normal(3) != d.complex_normal(3));
    for (int i = 0; i < 100; ++i) {
        const double u = a.uniform(i);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("OU correlation values") {
    const auto c = CorrelationFunction::ornstein_uhlenbeck(0.3);
    CHECK(std::abs(c(1.0, 1.0) - 0.15) < 1e-15);
    CHECK(std::abs(c(2.0, 1.0) - 0.15 * std::exp(-0.3)) < 1e-15);
    CHECK(std::abs(c(1.0, 2.0) - std::conj(c(2.0, 1.0))) < 1e-15);
    CHECK_THROWS_AS(CorrelationFunction::ornstein_uhlenbeck(0.0), InvalidParameter);
}

TEST_CASE("discrete-mode correlation and its exponential terms") {
    const std::vector<BathMode> modes{{cplx(0.5, 0.1), 0.7}, {0.3, -1.2}};
    const auto c = CorrelationFunction::discrete_modes(modes);
    const double t = 1.3, s = 0.4;
    cplx expect = 0.0;
    for (const auto& m : modes) expect += std::norm(m.g) * std::exp(cplx(0, -m.omega * (t - s)));
    CHECK(std::abs(c(t, s) - expect) < 1e-15);
    cplx from_terms = 0.0;
    for (const auto& e : c.exponential_terms()) from_terms += e.weight * std::exp(-e.rate * (t - s));
    CHECK(std::abs(from_terms - expect) < 1e-14);
    // the closed-system limit is allowed
    CHECK(std::abs(CorrelationFunction::discrete_modes({{0.0, 1.0}})(1.0, 0.0)) == 0.0);
}

TEST_CASE("discrete-mode path follows z_t = -i sum g_k conj(z_k) e^{i w_k t}") {
    const std::vector<BathMode> modes{{cplx(0.5, 0.1), 0.7}, {0.3, -1.2}};
    const std::vector<cplx> zk{cplx(0.2, -0.4), cplx(-1.0, 0.3)};
    const TimeGrid g{0.1, 10};
    const auto p = discrete_mode_path(modes, g, zk);
    for (int i = 0; i < g.size(); ++i) {
        cplx z = 0.0;
        for (std::size_t k = 0; k < 2; ++k) z += -kI * modes[k].g * std::conj(zk[k]) * std::exp(kI * modes[k].omega * g.t(i));
        CHECK(std::abs(p.z[i] - z) < 1e-15);
    }
}

TEST_CASE("noise moments within 3 sigma for each generator") {
    const auto ou = CorrelationFunction::ornstein_uhlenbeck(2.0);
    const auto dm = CorrelationFunction::discrete_modes({{0.6, 0.3}, {cplx(0.0, 0.4), -1.0}, {0.2, 2.0}});
    const TimeGrid g{0.1, 20};
    const std::vector<std::pair<int, int>> pairs{{0, 0}, {10, 5}, {20, 0}};
    for (const auto& chk : noise_moment_checks(NoiseGenerator::OrnsteinUhlenbeck, ou, g, 10000, 77, pairs)) CHECK(chk.pass);
    for (const auto& chk : noise_moment_checks(NoiseGenerator::Cholesky, ou, g, 10000, 77, pairs)) CHECK(chk.pass);
    for (const auto& chk : noise_moment_checks(NoiseGenerator::DiscreteModes, dm, g, 10000, 77, pairs)) CHECK(chk.pass);
}

TEST_CASE("time grid covering") {
    const auto g = TimeGrid::covering(0.01, 5.0);
    CHECK(g.n_steps == 500);
    CHECK(g.size() == 501);
    CHECK_THROWS_AS(TimeGrid::covering(0.03, 1.0), InvalidParameter);
}
