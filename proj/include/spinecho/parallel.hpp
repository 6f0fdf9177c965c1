#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spinecho {

// Worker count: hardware concurrency, capped by the SPINECHO_THREADS
// environment variable when set.
inline int hardware_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("SPINECHO_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1)
      n = static_cast<int>(std::min<long>(n, cap));
  }
  return n;
}

// Runs fn(chunk) for chunk in [0, n_chunks). Chunks are claimed dynamically,
// so callers that need reproducible floating-point sums must write partial
// results into per-chunk slots and combine them in chunk order afterwards;
// the result is then independent of the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(int n_threads = hardware_threads())
      : n_threads_(std::max(1, n_threads)) {
    for (int i = 1; i < n_threads_; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;
  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lock(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return n_threads_; }

  void run(int n_chunks, const std::function<void(int)>& fn) {
    if (n_chunks <= 0) return;
    if (workers_.empty() || n_chunks == 1) {
      for (int i = 0; i < n_chunks; ++i) fn(i);
      return;
    }
    {
      std::lock_guard<std::mutex> lock(m_);
      fn_ = &fn;
      n_chunks_ = n_chunks;
      next_.store(0, std::memory_order_relaxed);
      pending_ = n_chunks;
      ++generation_;
    }
    cv_.notify_all();
    drain();
    std::unique_lock<std::mutex> lock(m_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
  }

 private:
  void drain() {
    while (true) {
      const int i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= n_chunks_) return;
      (*fn_)(i);
      std::lock_guard<std::mutex> lock(m_);
      if (--pending_ == 0) {
        done_cv_.notify_all();
        return;
      }
    }
  }
  void worker_loop() {
    std::uint64_t seen = 0;
    while (true) {
      {
        std::unique_lock<std::mutex> lock(m_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      drain();
    }
  }

  const int n_threads_;
  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int)>* fn_ = nullptr;
  std::atomic<int> next_{0};
  int n_chunks_ = 0;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace spinecho
