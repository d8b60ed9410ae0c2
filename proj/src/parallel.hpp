#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dtrs::detail {

// Runs fn(begin, end) over a static partition of [0, n) on up to `threads`
// workers. The first exception thrown by any worker is rethrown.
template <class Fn>
void parallel_ranges(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t step = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t b = w * step;
    const std::size_t e = std::min(n, b + step);
    if (b >= e) break;
    pool.emplace_back([&, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

// Fixed chunking so reductions sum partials in the same order regardless of
// the thread count.
inline constexpr std::size_t kReductionChunks = 16;

inline std::size_t chunk_begin(std::size_t chunk, std::size_t n) {
  return chunk * n / kReductionChunks;
}

}  // namespace dtrs::detail
