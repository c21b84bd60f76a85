#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace lightyolo::detail {

// Splits [0, count) into contiguous chunks. Each index is handled by exactly
// one worker, so results do not depend on the thread count.
template <typename Fn>
void parallel_for(int64_t count, int64_t min_chunk, Fn&& fn) {
  const int64_t hw = std::max<int64_t>(1, std::thread::hardware_concurrency());
  const int64_t workers = std::min<int64_t>(hw, std::max<int64_t>(1, count / std::max<int64_t>(1, min_chunk)));
  if (workers <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<size_t>(workers));
  const int64_t chunk = (count + workers - 1) / workers;
  for (int64_t t = 0; t < workers; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

}  // namespace lightyolo::detail
