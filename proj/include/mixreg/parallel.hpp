#ifndef MIXREG_PARALLEL_HPP
#define MIXREG_PARALLEL_HPP

#include <Eigen/Dense>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mixreg {

/// Worker count: MIXREG_THREADS when set, otherwise hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv("MIXREG_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n). Job results must be stored by index by the
/// caller; the execution order is unspecified, so outputs stay deterministic
/// however many threads run.
template <typename F>
void parallel_for(Eigen::Index n, F&& fn, int n_threads = 0) {
  if (n <= 0) return;
  if (n_threads <= 0) n_threads = default_thread_count();
  if (n_threads > n) n_threads = static_cast<int>(n);
  if (n_threads <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const Eigen::Index i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mixreg

#endif  // MIXREG_PARALLEL_HPP
