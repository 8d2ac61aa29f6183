#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ccmc {

/// SplitMix64 finalizer. Scrambles a 64-bit word; the core of the
/// counter-based generator below and of stream-seed derivation.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over a byte string; used for stable tags and config hashes.
inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Derives an independent stream seed from (master seed, tag, trial index).
/// Feeding the result to SplitMix64 gives each trial its own stream, so
/// trials can run in any order or in parallel without sharing state.
inline constexpr std::uint64_t stream_seed(std::uint64_t master,
                                           std::uint64_t tag,
                                           std::uint64_t index) {
  std::uint64_t h = mix64(master + 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ mix64(tag + 0xD1B54A32D192ED03ULL));
  return mix64(h ^ mix64(index + 0x8BB84B93962EACC9ULL));
}

/// SplitMix64: seedable counter-based PRNG. The i-th output is a pure
/// function of seed + i*gamma, which keeps every draw reproducible across
/// platforms (no libstdc++ distribution quirks). Period 2^64, more than
/// enough for the trial sizes used here.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~0ULL) / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ccmc
