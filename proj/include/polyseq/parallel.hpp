#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace polyseq {

/// Number of worker threads the library may use. Defaults to the hardware
/// concurrency and is capped by the POLYSEQ_THREADS environment variable.
inline int max_threads() {
  static const int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("POLYSEQ_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
  }();
  return cached;
}

/// Runs fn(begin, end) over [0, n) split into fixed-size blocks. The block
/// boundaries depend only on n, never on the thread count, and every block
/// writes disjoint outputs, so results are identical for any POLYSEQ_THREADS
/// value. Work below min_serial stays on the calling thread.
template <typename Fn>
void parallel_for_blocks(std::int64_t n, std::int64_t block, Fn&& fn,
                         std::int64_t min_parallel_blocks = 4) {
  if (n <= 0) return;
  std::int64_t nblocks = (n + block - 1) / block;
  int threads = max_threads();
  if (threads <= 1 || nblocks < min_parallel_blocks) {
    for (std::int64_t b = 0; b < nblocks; ++b) {
      fn(b * block, std::min(n, (b + 1) * block));
    }
    return;
  }
  threads = static_cast<int>(std::min<std::int64_t>(threads, nblocks));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::int64_t b = t; b < nblocks; b += threads) {
        fn(b * block, std::min(n, (b + 1) * block));
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace polyseq
