#pragma once

#include <cstdint>

namespace dtr {

// Counter-based random streams. Every draw is a pure function of a key
// (seed, unit, stage, draw), so simulation and resampling are reproducible
// bit-for-bit regardless of evaluation order or thread count.
namespace rng {

// splitmix64 finalizer; full-period mixing of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t unit, std::uint64_t stage,
                         std::uint64_t draw) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ unit);
  h = mix64(h ^ stage);
  h = mix64(h ^ draw);
  return h;
}

// Uniform on the open interval (0, 1); never returns an endpoint, so it is
// safe to feed through the normal quantile.
inline double uniform(std::uint64_t k) {
  return (static_cast<double>(k >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via the inverse CDF (rational approximation plus one
// Halley refinement; absolute error well below 1e-12).
double normal(std::uint64_t k);

inline double uniform(std::uint64_t seed, std::uint64_t unit, std::uint64_t stage,
                      std::uint64_t draw) {
  return uniform(key(seed, unit, stage, draw));
}

inline double normal_at(std::uint64_t seed, std::uint64_t unit, std::uint64_t stage,
                        std::uint64_t draw) {
  return normal(key(seed, unit, stage, draw));
}

}  // namespace rng
}  // namespace dtr
