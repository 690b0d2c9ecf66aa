// rng.hpp — counter-based random streams.
//
// Every draw is a pure function of (master seed, stream id, domain, sample
// index), so a trajectory produces the same numbers no matter which worker
// runs it or in which order.
#pragma once

#include "nmqsd/linalg.hpp"

#include <array>
#include <cstdint>

namespace nmqsd {

// Philox4x32-10 (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Domains keep independent uses of one trajectory's stream apart.
enum class RngDomain : std::uint32_t {
    Noise = 1,
    InitialState = 2,
    Test = 3,
};

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream, RngDomain domain = RngDomain::Noise);

    // Two independent uniforms in (0, 1) for sample `index`.
    std::array<double, 2> uniform_pair(std::uint64_t index) const;
    double uniform(std::uint64_t index) const { return uniform_pair(index)[0]; }

    // Two independent N(0, 1) variates (Box-Muller).
    std::array<double, 2> normal_pair(std::uint64_t index) const;

    // Standard complex Gaussian, density exp(-|z|^2)/pi, so E|z|^2 = 1.
    cplx complex_normal(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::array<std::uint32_t, 2> key_;
};

} // namespace nmqsd
