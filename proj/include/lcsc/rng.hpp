#pragma once

#include <cstdint>

namespace lcsc {

/// Counter-based pseudo-random generator.
///
/// The output at step t is the splitmix64 finalizer applied to
/// key + t * golden_gamma, so the generator is a pure function of
/// (key, counter). Substreams are derived by hashing the parent key with a
/// stream index; any worker can therefore reconstruct its stream from the
/// master seed alone, which keeps concurrent runs reproducible.
///
/// Stream layout used across the project:
///   Prng(master).substream(g).substream(r)  -- grid point g, repetition r
///   stream.derive_seed(t)                   -- plain seed for tag t
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : key_(mix(seed + kGamma)) {}

  /// Independent child stream identified by `index`.
  Prng substream(std::uint64_t index) const {
    return Prng(key_ ^ mix(index + kGamma), raw_key_tag{});
  }

  /// A 64-bit seed for APIs that take one; equal inputs give equal seeds.
  std::uint64_t derive_seed(std::uint64_t tag) const {
    return mix(key_ ^ mix((tag + 1) * kGamma));
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased (rejection sampling). n >= 1.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    std::uint64_t x = next_u64();
    while (x < threshold) x = next_u64();
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Sum of `trials` independent Bernoulli(p) draws. Consumes exactly
  /// `trials` values from the stream, so the layout stays easy to audit.
  int binomial(int trials, double p) {
    int successes = 0;
    for (int t = 0; t < trials; ++t) successes += bernoulli(p) ? 1 : 0;
    return successes;
  }

 private:
  struct raw_key_tag {};
  Prng(std::uint64_t key, raw_key_tag) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace lcsc
