#include "mrinet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace mrinet {

namespace {
std::atomic<unsigned> &thread_setting() {
  static std::atomic<unsigned> n{std::max(1u, std::thread::hardware_concurrency())};
  return n;
}
} // namespace

void set_num_threads(unsigned n) { thread_setting() = std::max(1u, n); }
unsigned num_threads() { return thread_setting(); }

void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)> &fn) {
  if (n == 0)
    return;
  min_chunk = std::max<std::size_t>(1, min_chunk);
  std::size_t workers = std::min<std::size_t>(num_threads(), (n + min_chunk - 1) / min_chunk);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
      std::size_t b = w * chunk, e = std::min(n, b + chunk);
      if (b < e)
        pool.emplace_back([&fn, &errors, w, b, e] {
          try {
            fn(b, e);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
    }
    try {
      fn(0, std::min(n, chunk));
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  // The error from the lowest chunk wins, independent of scheduling.
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace mrinet
