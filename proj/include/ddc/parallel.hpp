#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ddc {

namespace detail {
inline std::atomic<int> g_jobs{1};
}

// Global worker width for parallel loops (CLI --jobs).
inline int jobs() { return detail::g_jobs.load(); }
inline void set_jobs(int j) {
  if (j <= 0) j = static_cast<int>(std::thread::hardware_concurrency());
  if (j <= 0) j = 1;
  detail::g_jobs.store(j);
}

// Runs fn(i) for i in [0, n). Each index writes only its own outputs, so
// results do not depend on the worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int width = 0) {
  if (width <= 0) width = jobs();
  if (width <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(width, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace ddc
