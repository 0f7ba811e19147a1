#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fqlab {

/// Deterministic random source.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard)
/// and maps raw bits to values directly, avoiding std::uniform_*_distribution
/// whose results are implementation defined. Identical seeds therefore give
/// identical streams on every platform and compiler.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform draw in (0, 1]; safe as a log() argument.
  double positive_unit() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Uniform draw in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  /// Standard exponential deviate; used for simplex-uniform rows.
  double exponential() { return -std::log(positive_unit()); }

  /// Derives an independent stream for sub-task `index`.
  std::uint64_t split(std::uint64_t index) {
    // splitmix64 finalizer over (state, index); decouples derived seeds.
    std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::mt19937_64 engine_;
};

/// Seed for the k-th member of a family derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fqlab
