#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace gnnr {

/// SplitMix64 stream. All randomness in the library flows through this
/// generator so that runs are reproducible independent of the standard
/// library's distribution implementations.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }
  std::uint64_t next() noexcept;

  /// Uniform on the open interval (0, 1): ((next() >> 11) + 0.5) * 2^-53.
  double uniform() noexcept;
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  /// Uniform integer in [0, n) by rejection sampling. n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Derive the seed of a named substream (e.g. "init", "gumbel", "split",
/// "synth") from a run seed: SplitMix64 finalizer of seed ^ FNV-1a(name).
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) noexcept;

inline SplitMix64 substream(std::uint64_t seed, std::string_view name) noexcept {
  return SplitMix64(substream_seed(seed, name));
}

/// Fisher-Yates shuffle driven by SplitMix64::below (portable across
/// standard libraries, unlike std::shuffle).
template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) noexcept {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace gnnr
