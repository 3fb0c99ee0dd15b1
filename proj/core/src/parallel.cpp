#include "sg/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace sg {

namespace {
int g_threads = []() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}();
}  // namespace

void set_thread_count(int n) { g_threads = std::max(1, n); }
int thread_count() { return g_threads; }

void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const int workers = std::min<std::size_t>(static_cast<std::size_t>(g_threads), n ? n : 1);
  if (workers <= 1 || n < 2048) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi]() { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sg
