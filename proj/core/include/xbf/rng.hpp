#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace xbf {

/// One step of the splitmix64 sequence; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Derives an independent stream seed from a base seed and a stream index
/// (instance id, epoch, ...). Defined as two splitmix64 steps:
///   s = seed; a = splitmix64(s); s = a ^ stream; return splitmix64(s).
/// Used everywhere a per-item generator is needed, so results do not depend
/// on iteration order or thread count.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Seeded generator with platform-independent derived distributions.
/// The engine is mt19937_64 (fully specified by the standard); uniform draws,
/// bounded integers and Gumbel variates are computed here rather than through
/// <random> distributions so that outputs are bit-identical across
/// standard-library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1); never returns 0.
  double uniform_open();
  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard Gumbel(0, 1) variate.
  double gumbel();

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by Rng::below.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace xbf
