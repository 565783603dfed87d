#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace rbmtree {

/// Static block partition of [0, n) over `threads` workers. Each index is
/// processed by exactly one worker, so disjoint writes need no locking.
inline void parallel_for(int n, int threads,
                         const std::function<void(int)> &fn) {
  if (n <= 0)
    return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i)
      fn(i);
    return;
  }
  const int nt = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    const int lo = static_cast<int>(static_cast<long long>(n) * t / nt);
    const int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / nt);
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i)
        fn(i);
    });
  }
  for (auto &th : pool)
    th.join();
}

} // namespace rbmtree
