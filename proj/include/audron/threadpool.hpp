#ifndef AUDRON_THREADPOOL_HPP
#define AUDRON_THREADPOOL_HPP

#include <cstdint>
#include <functional>

namespace audron {

// Process-wide worker pool. Thread count = min(hardware_concurrency,
// AUDRON_THREADS) read once at first use; set_thread_count overrides before
// first use (tests).
class ThreadPool {
 public:
  static ThreadPool& instance();
  static void set_thread_count(int n);  // no effect after first instance() call

  int threads() const { return threads_; }

  // Runs fn(begin, end) on disjoint index sub-ranges covering [0, n) and
  // blocks until done. Partitioning is static, so any per-range work that
  // uses a fixed in-range order stays bit-deterministic for every thread
  // count. Small n runs inline on the caller.
  void for_range(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

  ~ThreadPool();

 private:
  explicit ThreadPool(int threads);
  struct Impl;
  Impl* impl_;
  int threads_;
};

// Convenience wrapper around the singleton.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  ThreadPool::instance().for_range(n, fn);
}

}  // namespace audron

#endif  // AUDRON_THREADPOOL_HPP
