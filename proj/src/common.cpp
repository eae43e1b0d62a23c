#include "slutsky/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace slutsky {

int worker_count() {
  static const int cached = [] {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("SLUTSKY_FORGE_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1) n = std::min<long>(n, v);
    }
    return n;
  }();
  return cached;
}

void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk == 0) chunk = 1;
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  const int threads = std::min<std::size_t>(worker_count(), nchunks);

  if (threads <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }

  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t c = static_cast<std::size_t>(t); c < nchunks;
           c += static_cast<std::size_t>(threads))
        fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace slutsky
