#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace hmpcnn {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end, block_index) over fixed-size index blocks. The block
// decomposition depends only on n, never on the thread count, so per-block
// results can be reduced in block order to give thread-count-independent
// totals.
inline std::int64_t block_count(std::int64_t n, std::int64_t block_size = 1024) {
  return (n + block_size - 1) / block_size;
}

inline void parallel_blocks(std::int64_t n, int threads,
                            const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn,
                            std::int64_t block_size = 1024) {
  const std::int64_t nblocks = block_count(n, block_size);
  threads = std::min<std::int64_t>(resolve_threads(threads), nblocks);
  if (threads <= 1) {
    for (std::int64_t b = 0; b < nblocks; ++b) {
      fn(b * block_size, std::min(n, (b + 1) * block_size), b);
    }
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t b = next.fetch_add(1);
        if (b >= nblocks) return;
        fn(b * block_size, std::min(n, (b + 1) * block_size), b);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace hmpcnn
