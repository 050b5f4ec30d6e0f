#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace haarlab::rng {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: every draw is a pure function of (key, index, lane).
///
/// Samples can be produced in any order and by any number of workers; the
/// value at a given (index, lane) never depends on how work was chunked.
class CounterStream {
 public:
  constexpr explicit CounterStream(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

  constexpr std::uint64_t bits(std::uint64_t index, std::uint32_t lane) const noexcept {
    std::uint64_t h = mix64(key_ + index * 0xD1B54A32D192ED03ULL);
    return mix64(h ^ (static_cast<std::uint64_t>(lane) + 1) * 0xA0761D6478BD642FULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t index, std::uint32_t lane) const noexcept {
    return static_cast<double>(bits(index, lane) >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  constexpr double uniform_open(std::uint64_t index, std::uint32_t lane) const noexcept {
    return static_cast<double>((bits(index, lane) >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by multiply-high; bias is below bound / 2^64.
  std::uint64_t below(std::uint64_t index, std::uint32_t lane, std::uint64_t bound) const noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits(index, lane)) * bound) >> 64);
  }

  /// Two independent standard normals (Box-Muller) from lanes `lane` and `lane + 1`.
  std::pair<double, double> normal_pair(std::uint64_t index, std::uint32_t lane) const noexcept {
    const double r = std::sqrt(-2.0 * std::log(uniform_open(index, lane)));
    const double theta = 2.0 * std::numbers::pi * uniform(index, lane + 1);
    return {r * std::cos(theta), r * std::sin(theta)};
  }

  /// Independent child stream, e.g. one per product factor.
  constexpr CounterStream derive(std::uint64_t tag) const noexcept {
    return CounterStream(key_ ^ mix64(tag * 0x9FB21C651E98DF25ULL + 0x3C6EF372FE94F82BULL), 0);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  constexpr CounterStream(std::uint64_t raw_key, int) noexcept : key_(raw_key) {}
  std::uint64_t key_;
};

}  // namespace haarlab::rng
