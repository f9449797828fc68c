#include "audron/threadpool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace audron {

namespace {
int g_requested_threads = 0;

int decide_threads() {
  int n = g_requested_threads;
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  if (const char* env = std::getenv("AUDRON_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && cap < n) n = cap;
  }
  return n;
}
}  // namespace

namespace {
thread_local bool tl_inside_pool = false;
std::mutex g_dispatch_mu;  // serializes concurrent for_range callers
void mark_pool_thread() { tl_inside_pool = true; }
}  // namespace

struct ThreadPool::Impl {
  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  const std::function<void(int64_t, int64_t)>* job = nullptr;
  int64_t job_n = 0;
  int job_chunks = 0;
  std::atomic<int> next_chunk{0};
  int pending = 0;
  uint64_t generation = 0;
  bool stop = false;

  void worker_loop() {
    mark_pool_thread();
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu);
        cv_work.wait(lk, [&] { return stop || generation != seen; });
        if (stop) return;
        seen = generation;
      }
      run_chunks();
      {
        std::lock_guard<std::mutex> lk(mu);
        if (--pending == 0) cv_done.notify_all();
      }
    }
  }

  void run_chunks() {
    const int64_t chunk = (job_n + job_chunks - 1) / job_chunks;
    for (;;) {
      const int c = next_chunk.fetch_add(1);
      if (c >= job_chunks) break;
      const int64_t b = c * chunk;
      const int64_t e = std::min<int64_t>(job_n, b + chunk);
      if (b < e) (*job)(b, e);
    }
  }
};

ThreadPool::ThreadPool(int threads) : impl_(new Impl), threads_(threads) {
  for (int i = 1; i < threads; ++i)
    impl_->workers.emplace_back([this] { impl_->worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(impl_->mu);
    impl_->stop = true;
  }
  impl_->cv_work.notify_all();
  for (auto& w : impl_->workers) w.join();
  delete impl_;
}

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool(decide_threads());
  return pool;
}

void ThreadPool::set_thread_count(int n) { g_requested_threads = n; }

void ThreadPool::for_range(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (threads_ == 1 || n < 2 || tl_inside_pool) {
    fn(0, n);
    return;
  }
  std::lock_guard<std::mutex> dispatch_lk(g_dispatch_mu);
  tl_inside_pool = true;
  Impl& im = *impl_;
  {
    std::lock_guard<std::mutex> lk(im.mu);
    im.job = &fn;
    im.job_n = n;
    im.job_chunks = std::min<int64_t>(n, threads_ * 4);
    im.next_chunk.store(0);
    im.pending = threads_ - 1;
    ++im.generation;
  }
  im.cv_work.notify_all();
  im.run_chunks();  // caller participates
  {
    std::unique_lock<std::mutex> lk(im.mu);
    im.cv_done.wait(lk, [&] { return im.pending == 0; });
  }
  tl_inside_pool = false;
}

}  // namespace audron
