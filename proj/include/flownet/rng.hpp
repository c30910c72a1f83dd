#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace flownet {

/**
 * Counter-based generator: the k-th draw of stream s under seed is a pure
 * function of (seed, s, k). Parallel consumers take one stream each, so
 * results do not depend on how work is scheduled.
 *
 * The mixing function is the SplitMix64 finalizer applied to a Weyl
 * sequence over a per-stream key.
 */
class CounterRng
{
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) noexcept
    : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL)))
    , counter_(counter)
  {
  }

  std::uint64_t next_u64() noexcept
  {
    return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t bound) noexcept
  {
    if (bound <= 1)
      return 0;
    const std::uint64_t limit = ~std::uint64_t{ 0 } - (~std::uint64_t{ 0 } % bound);
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % bound;
  }

  /// Uniform point in the closed unit disk (polar method).
  void unit_disk(double& x, double& y) noexcept
  {
    const double r = std::sqrt(uniform());
    const double phi = 2.0 * std::numbers::pi * uniform();
    x = r * std::cos(phi);
    y = r * std::sin(phi);
  }

  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept
  {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

} // namespace flownet
