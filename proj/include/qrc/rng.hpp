#pragma once

// Counter-based deterministic random numbers.
//
// Every draw is addressed by (seed, index), so any sample of any stream can
// be regenerated in isolation: there is no generator state to advance and the
// order of evaluation cannot change the values. Streams for sub-tasks are
// derived from one top-level seed so a single integer pins down an entire
// simulated data set.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace qrc::rng {

// Identifier written into trace metadata so a reader can tell how the noise
// in a simulated file was produced.
inline constexpr const char* kGeneratorId = "splitmix64-boxmuller";

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 output function. splitmix64(seed + i * kGamma) enumerates the
// classic SplitMix64 stream for that seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += kGamma;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// index-th 64-bit word of the stream identified by seed.
constexpr std::uint64_t word_at(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(seed + index * kGamma);
}

// Uniform double in (0, 1]; never returns 0 so it is safe under log().
inline double uniform_at(std::uint64_t seed, std::uint64_t index) noexcept {
    return static_cast<double>((word_at(seed, index) >> 11) + 1) * 0x1.0p-53;
}

// Standard normal deviate, Box-Muller. Consumes words 2*index and
// 2*index + 1 of the stream, so indices never collide across draws.
inline double gaussian_at(std::uint64_t seed, std::uint64_t index) noexcept {
    const double u1 = uniform_at(seed, 2 * index);
    const double u2 = static_cast<double>(word_at(seed, 2 * index + 1) >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Seed for an independent sub-stream. The salt keeps derived streams out of
// the index space of gaussian_at / uniform_at on the parent seed.
constexpr std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed ^ 0x6A09E667F3BCC909ull) + stream * kGamma);
}

}  // namespace qrc::rng
