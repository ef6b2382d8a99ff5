#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace ecut_mppi {

/// Runs body(begin, end, worker) over a contiguous partition of [0, n).
/// The partition depends only on n and the resolved thread count, never on
/// scheduling, so worker results can be written to disjoint slots and reduced
/// in a fixed order afterwards.
inline void parallel_for(int n, int threads,
                         const std::function<void(int, int, int)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    if (n > 0) body(0, n, 0);
    return;
  }
  const int chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end, w] { body(begin, end, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ecut_mppi
