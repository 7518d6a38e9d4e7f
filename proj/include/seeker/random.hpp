#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace seeker {

/// SplitMix64 finalizer. Used both as the generator's output function and
/// to derive independent substreams from a key.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x9e3779b97f4a7c15ULL));
}

/// SplitMix64. The whole state is (seed, draw counter), which is what
/// session snapshots persist; `discard` is O(1).
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  void discard(std::uint64_t n) noexcept { counter_ += n; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const SplitMix64&, const SplitMix64&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Uniform double in the open interval (0, 1), built from the top 53 bits.
inline double unit_open(std::uint64_t bits) noexcept {
  constexpr double step = 0x1.0p-53;
  double u = static_cast<double>(bits >> 11) * step;
  if (u < step) u = step;
  if (u > 1.0 - step) u = 1.0 - step;
  return u;
}

template <class Rng>
double uniform_open(Rng& rng) {
  return unit_open(rng());
}

/// Unbiased integer in [0, n). Rejection sampling keeps the output identical
/// across standard library implementations.
template <class Rng>
std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Standard normal via Box-Muller (one variate per call).
template <class Rng>
double standard_normal(Rng& rng) {
  const double u1 = uniform_open(rng);
  const double u2 = uniform_open(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Gumbel(0,1) from raw bits: -ln(-ln U).
inline double gumbel_from_bits(std::uint64_t bits) noexcept {
  return -std::log(-std::log(unit_open(bits)));
}

}  // namespace seeker
