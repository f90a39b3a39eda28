#include "xbf/op_counter.hpp"

namespace xbf::detail {

OpCounts*& active_op_counter() noexcept {
  thread_local OpCounts* counter = nullptr;
  return counter;
}

}  // namespace xbf::detail
