#pragma once

#include <cstddef>
#include <functional>

namespace mrinet {

// Worker count used by kernels. Defaults to the hardware concurrency.
// Kernels partition only over independent output elements, so results are
// bitwise identical for every thread count; a count of 1 is the strict
// single-threaded mode.
void set_num_threads(unsigned n);
unsigned num_threads();

// Runs fn(begin, end) over [0, n) in contiguous chunks of at least
// `min_chunk` items.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)> &fn);

} // namespace mrinet
