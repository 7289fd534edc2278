#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rlex {

// splitmix64 finalizer; spreads low-entropy user seeds over the full state space.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream from (seed, stream tag, element index).
// Work items seeded this way see the same stream no matter how many
// workers run them or in what order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix64(mix64(seed ^ mix64(stream)) + index);
}

inline std::mt19937_64 make_engine(std::uint64_t raw_seed) { return std::mt19937_64{raw_seed}; }

// Sampling helpers below consume raw engine words directly (no std::*_distribution),
// so the draw sequence is pinned by the engine alone.

// uniform in [0, 1)
inline double uniform_unit(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// uniform in [lo, hi)
inline double uniform_in(std::mt19937_64& eng, double lo, double hi) {
  return lo + uniform_unit(eng) * (hi - lo);
}

// uniform index in [0, n); n-vs-2^64 modulo bias is negligible at our scales
inline std::size_t uniform_index(std::mt19937_64& eng, std::size_t n) {
  return static_cast<std::size_t>(eng() % n);
}

// Box-Muller; consumes exactly two engine words per call.
inline double normal_sample(std::mt19937_64& eng, double mean = 0.0, double stddev = 1.0) {
  const double u1 = 1.0 - uniform_unit(eng);  // (0, 1], keeps log finite
  const double u2 = uniform_unit(eng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace rlex
