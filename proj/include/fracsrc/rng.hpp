#pragma once

#include <cstdint>

namespace fracsrc {

/// Counter-based SplitMix64. Draw i of a stream with seed s is
/// mix64(s + (i+1) * golden); the output depends only on (seed, i), so
/// streams are reproducible across platforms and safe to evaluate in any
/// order.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t i) {
  return mix64(seed + (i + 1) * 0x9E3779B97F4A7C15ull);
}

/// Uniform double in [0, 1) from the top 53 bits of the counter stream.
inline double counter_uniform01(std::uint64_t seed, std::uint64_t i) {
  return static_cast<double>(counter_bits(seed, i) >> 11) * 0x1.0p-53;
}

/// Uniform double in [-1, 1).
inline double counter_uniform_sym(std::uint64_t seed, std::uint64_t i) {
  return 2.0 * counter_uniform01(seed, i) - 1.0;
}

/// Sequential view of the counter stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  double next01() { return counter_uniform01(seed_, n_++); }
  double next_sym() { return counter_uniform_sym(seed_, n_++); }
  std::uint64_t next_bits() { return counter_bits(seed_, n_++); }

  /// Derive an independent stream (e.g. one per experiment cell).
  RngStream fork(std::uint64_t tag) const {
    return RngStream(mix64(seed_ ^ counter_bits(tag, 0)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t n_ = 0;
};

}  // namespace fracsrc
