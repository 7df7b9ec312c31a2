#pragma once

#include <cstdint>
#include <random>

namespace spdc {

using RandomStream = std::mt19937_64;

// Independent stream for (seed, purpose, index). std::seed_seq and
// mt19937_64 are fully specified by the standard, so streams are identical
// on every conforming platform.
inline RandomStream make_stream(std::uint64_t seed, std::uint32_t purpose,
                                std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose, static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return RandomStream(seq);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(RandomStream& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace spdc
