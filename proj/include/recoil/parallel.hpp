#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace recoil::par {

/// Worker count for `n_jobs` independent jobs. `requested` > 0 wins;
/// otherwise the hardware count is used. RECOIL_SIGMA_THREADS, when set to
/// a positive integer, caps the result (0 or unset leaves it automatic).
inline int resolve_threads(int requested, std::size_t n_jobs) {
  int t = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  if (const char* env = std::getenv("RECOIL_SIGMA_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0 && cap < t)
      t = static_cast<int>(cap);
  }
  if (static_cast<std::size_t>(t) > n_jobs) t = static_cast<int>(n_jobs);
  return t < 1 ? 1 : t;
}

/// Runs body(i) for i in [0, n) on `threads` workers. Results must go to
/// index-addressed storage so the outcome is thread-count independent.
/// The first exception is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads) - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace recoil::par
