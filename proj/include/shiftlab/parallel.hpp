#pragma once

#include <cstddef>
#include <functional>

namespace shiftlab {

/// Worker cap from SHIFTLAB_THREADS, else std::thread::hardware_concurrency().
unsigned worker_count();

/// Splits [0, n) into contiguous chunks, one per worker, and calls
/// body(begin, end) for each. Blocks until all chunks finish; the first
/// exception thrown by any chunk is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  unsigned workers = 0);

}  // namespace shiftlab
