#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "paramap/error.hpp"

namespace paramap {

// Fixed-size pool running static, contiguous partitions of an index range.
//
// Work is split into exactly size() chunks regardless of load, so any kernel
// that writes per-index results and reduces them serially afterwards produces
// identical output for every thread count. The calling thread executes chunk 0.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads = 1) : threads_(std::max<std::size_t>(1, threads)) {
    workers_.reserve(threads_ - 1);
    for (std::size_t w = 1; w < threads_; ++w) {
      workers_.emplace_back([this, w] { worker_loop(w); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : workers_) t.join();
  }

  std::size_t size() const { return threads_; }

  // Calls fn(begin, end, chunk) once per non-empty chunk of [0, n).
  template <class Fn>
  void parallel_for_chunks(std::size_t n, Fn&& fn) {
    if (n == 0) return;
    const std::size_t chunks = std::min(threads_, n);
    auto bounds = [n, chunks](std::size_t c) { return n * c / chunks; };
    if (chunks == 1) {
      fn(std::size_t{0}, n, std::size_t{0});
      return;
    }
    std::function<void(std::size_t)> job = [&](std::size_t c) {
      if (c < chunks) fn(bounds(c), bounds(c + 1), c);
    };
    run(job);
  }

  // Calls fn(i) for every i in [0, n).
  template <class Fn>
  void parallel_for(std::size_t n, Fn&& fn) {
    parallel_for_chunks(n, [&](std::size_t b, std::size_t e, std::size_t) {
      for (std::size_t i = b; i < e; ++i) fn(i);
    });
  }

 private:
  void run(std::function<void(std::size_t)>& job) {
    {
      std::lock_guard lock(mutex_);
      job_ = &job;
      pending_ = threads_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();

    std::exception_ptr local;
    try {
      job(0);
    } catch (...) {
      local = std::current_exception();
    }

    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
    if (local) std::rethrow_exception(local);
    if (error_) std::rethrow_exception(error_);
  }

  void worker_loop(std::size_t index) {
    std::size_t seen = 0;
    for (;;) {
      std::function<void(std::size_t)>* job = nullptr;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
        job = job_;
      }
      std::exception_ptr err;
      try {
        (*job)(index);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        if (err && !error_) error_ = err;
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::size_t threads_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  std::exception_ptr error_;
  bool stopping_ = false;
};

// Thread count from PARAMAP_THREADS, or the hardware concurrency.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("PARAMAP_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string("PARAMAP_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace paramap
