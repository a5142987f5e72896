#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace egowm::cli {

/// Worker cap: EGOWM_THREADS when set to a positive integer, else the hardware thread count.
inline int64_t worker_count() {
  if (const char* env = std::getenv("EGOWM_THREADS")) {
    try {
      const long long v = std::stoll(env);
      if (v > 0) return v;
    } catch (const std::logic_error&) {
    }
  }
  return std::max<int64_t>(1, static_cast<int64_t>(std::thread::hardware_concurrency()));
}

/// Runs fn(i) for i in [0, n) on up to worker_count() threads; rethrows the first failure.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  const int64_t workers = std::min(n, worker_count());
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int64_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int64_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace egowm::cli
