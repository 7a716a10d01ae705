#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace pocusiq {

/// Fixed-size pool of persistent workers executing one range-split job at a
/// time. Work is partitioned into contiguous chunks, so callers that write
/// disjoint outputs per index get results independent of the thread count.
class ThreadPool {
 public:
  explicit ThreadPool(int threads = 1) { resize(threads); }

  ~ThreadPool() { stop(); }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int size() const noexcept { return threads_; }

  void resize(int threads) {
    threads = std::max(1, threads);
    if (threads == threads_) return;
    stop();
    threads_ = threads;
    shutdown_ = false;
    for (int i = 1; i < threads_; ++i) {
      workers_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  /// Runs fn(begin, end) over [0, n) split into at most size() chunks.
  /// Blocks until all chunks finish. Not re-entrant.
  void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t chunks = std::min<std::size_t>(threads_, n);
    if (chunks <= 1) {
      fn(0, n);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      job_ = &fn;
      job_n_ = n;
      job_chunks_ = chunks;
      pending_ = chunks - 1;
      ++generation_;
    }
    wake_.notify_all();
    run_chunk(0);
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  void run_chunk(std::size_t chunk) {
    const std::size_t begin = job_n_ * chunk / job_chunks_;
    const std::size_t end = job_n_ * (chunk + 1) / job_chunks_;
    if (begin < end) (*job_)(begin, end);
  }

  void worker_loop(int index) {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
        if (static_cast<std::size_t>(index) >= job_chunks_) continue;
      }
      run_chunk(static_cast<std::size_t>(index));
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      shutdown_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
    threads_ = 1;
  }

  int threads_ = 1;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  std::size_t job_chunks_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool shutdown_ = false;
};

/// Process-wide pool used by the neural kernels. Defaults to one thread.
inline ThreadPool& compute_pool() {
  static ThreadPool pool(1);
  return pool;
}

inline int hardware_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// `cap` is an upper bound: the pool never runs more workers than the machine
/// has hardware threads, since oversubscribed workers only add overhead.
inline void set_compute_threads(int cap) { compute_pool().resize(std::min(std::max(1, cap), hardware_threads())); }

/// Workers actually in use, after capping.
inline int compute_threads() { return compute_pool().size(); }

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  auto& pool = compute_pool();
  if (pool.size() <= 1 || n <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::function<void(std::size_t, std::size_t)> job = std::forward<Fn>(fn);
  pool.parallel_for(n, job);
}

}  // namespace pocusiq
