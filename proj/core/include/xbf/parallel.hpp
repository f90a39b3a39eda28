#pragma once

#include <cstddef>
#include <functional>

namespace xbf {

/// Caps the number of worker threads used by parallel loops. 0 or 1 runs inline.
void set_max_threads(std::size_t threads);
std::size_t max_threads();

/// Runs `body(begin, end)` over fixed-size chunks of [0, n). Chunk boundaries
/// depend only on `n` and `chunk`, never on the thread count, so callers that
/// write per-index (or per-chunk) results and reduce them in index order get
/// bit-identical output for any number of threads.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace xbf
