#pragma once

#include <cstdint>

namespace xbf {

/// Arithmetic work performed by scoring and sampling kernels.
struct OpCounts {
  std::uint64_t multiply_adds = 0;  ///< sparse dot-product terms
  std::uint64_t exponentials = 0;   ///< exp() evaluations in softmax
  std::uint64_t sampling_steps = 0; ///< items scanned while drawing a slate

  [[nodiscard]] std::uint64_t total() const { return multiply_adds + exponentials + sampling_steps; }
};

namespace detail {
OpCounts*& active_op_counter() noexcept;
}

/// Installs a thread-local counter for the lifetime of the object. Nested
/// counters shadow outer ones.
class ScopedOpCounter {
 public:
  ScopedOpCounter() : previous_(detail::active_op_counter()) { detail::active_op_counter() = &counts_; }
  ~ScopedOpCounter() { detail::active_op_counter() = previous_; }
  ScopedOpCounter(const ScopedOpCounter&) = delete;
  ScopedOpCounter& operator=(const ScopedOpCounter&) = delete;

  [[nodiscard]] const OpCounts& counts() const { return counts_; }

 private:
  OpCounts counts_;
  OpCounts* previous_;
};

inline void count_multiply_adds(std::uint64_t n) {
  if (auto* c = detail::active_op_counter()) c->multiply_adds += n;
}
inline void count_exponentials(std::uint64_t n) {
  if (auto* c = detail::active_op_counter()) c->exponentials += n;
}
inline void count_sampling_steps(std::uint64_t n) {
  if (auto* c = detail::active_op_counter()) c->sampling_steps += n;
}

}  // namespace xbf
