#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace corrstress {

// Error taxonomy mapped to CLI exit codes: validation 2, numerical 3, I/O 4.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stage tags for deriving independent RNG streams from one master seed.
namespace rng_stage {
inline constexpr std::uint64_t factor_selection = 1;
inline constexpr std::uint64_t nig_sampling = 2;
inline constexpr std::uint64_t reverse_stress_mc = 3;
inline constexpr std::uint64_t reverse_stress_hdr = 4;
}  // namespace rng_stage

// All stochastic stages derive their generator from (seed, stage, index) so
// reruns with the same master seed are bit-reproducible and streams never
// alias across stages or work items.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t stage,
                                  std::uint64_t index = 0) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(stage >> 32),
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

// Deterministic float formatting for emitted files. 17 significant digits
// round-trips doubles exactly, which staged CLI runs rely on.
inline std::string format_double(double x, int precision = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    return std::string(buf);
}

}  // namespace corrstress
