#pragma once

#include <cmath>
#include <cstdint>

namespace slsdrop {

// Deterministic splitmix64 stream with hierarchical substreams. The generator
// is fully specified here (no standard-library distributions), so identical
// seeds give bit-identical draws on every platform.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  // Independent child stream; derivation depends only on (seed, tag).
  SeedStream substream(std::uint64_t tag) const {
    return SeedStream(mix(seed_ ^ (0x9E3779B97F4A7C15ull + tag)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double next_gaussian() {
    double u1 = next_unit();
    const double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace slsdrop
