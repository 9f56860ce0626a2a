#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace proxyq {

// Order-preserving parallel map over index ranges. Workers own disjoint
// contiguous chunks and write results into preallocated slots, so the output
// is identical for any worker count.
inline void parallel_for(size_t n, int workers,
                         const std::function<void(size_t, size_t)>& chunk_fn) {
  if (n == 0) return;
  if (workers < 1) workers = 1;
  const size_t w = std::min<size_t>(static_cast<size_t>(workers), n);
  if (w == 1) {
    chunk_fn(0, n);
    return;
  }
  const size_t chunk = (n + w - 1) / w;
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (size_t t = 0; t < w; ++t) {
    const size_t lo = t * chunk;
    const size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([&chunk_fn, lo, hi] { chunk_fn(lo, hi); });
  }
  for (auto& th : threads) th.join();
}

}  // namespace proxyq
