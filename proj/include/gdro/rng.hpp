#ifndef GDRO_RNG_HPP
#define GDRO_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gdro {

/// Portable counter-based 64-bit generator.
///
/// The i-th output of a stream is `mix64(key + (i + 1) * 0x9E3779B97F4A7C15)`
/// where `mix64` is the SplitMix64 finalizer. A stream is identified by
/// `(seed, stream_id)`; its key is `mix64(seed ^ mix64(stream_id + 0x632BE59BD9B4E019))`.
/// Only integer arithmetic is involved, so the bit stream is identical on
/// every platform. Derived doubles go through `uniform01()` (53-bit) and
/// `normal()` (Box-Muller, cosine branch only, one uniform pair per draw).
class CounterRng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream_id = 0)
      : key_(mix64(seed ^ mix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// A child stream that does not overlap this one's outputs.
  [[nodiscard]] constexpr CounterRng split(std::uint64_t stream_id) const {
    CounterRng child;
    child.key_ = mix64(key_ ^ mix64(stream_id + 0xD1B54A32D192ED03ULL));
    return child;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform01_open_low() { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by Lemire's multiply-shift with rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    unsigned __int128 prod = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(prod);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        prod = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(prod);
      }
    }
    return static_cast<std::uint64_t>(prod >> 64);
  }

  /// Standard normal via Box-Muller; the sine branch is discarded.
  double normal() {
    const double u1 = uniform01_open_low();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  [[nodiscard]] constexpr std::uint64_t counter() const { return counter_; }

  friend constexpr bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Stream ids reserved by the library.
namespace streams {
inline constexpr std::uint64_t kSolver = 0x5011;
inline constexpr std::uint64_t kDatasetBase = 0xDA7A0000;
inline constexpr std::uint64_t kClassifierBase = 0xC1A50000;
}  // namespace streams

}  // namespace gdro

#endif
