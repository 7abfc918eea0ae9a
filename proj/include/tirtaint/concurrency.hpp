#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

// Small concurrency kit: a work-stealing thread pool for partition tasks
// and a bounded blocking queue for the pipeline stages.

namespace tirtaint {

class WorkStealingPool {
 public:
  explicit WorkStealingPool(unsigned workers) : queues_(workers ? workers : 1) {
    unsigned n = workers ? workers : 1;
    threads_.reserve(n);
    for (unsigned w = 0; w < n; w++)
      threads_.emplace_back([this, w] { run(w); });
  }

  ~WorkStealingPool() {
    {
      std::lock_guard lk(mu_);
      done_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  // round-robin submission; idle workers steal from the back of peers
  void submit(std::function<void()> task) {
    {
      std::lock_guard lk(mu_);
      queues_[next_++ % queues_.size()].push_back(std::move(task));
      pending_++;
    }
    cv_.notify_one();
  }

  void wait_idle() {
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [this] { return pending_ == 0 && active_ == 0; });
  }

 private:
  void run(unsigned self) {
    while (true) {
      std::function<void()> task;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [this] { return done_ || pending_ > 0; });
        if (done_ && pending_ == 0) return;
        if (!queues_[self].empty()) {
          task = std::move(queues_[self].front());
          queues_[self].pop_front();
        } else {
          for (auto& q : queues_) {
            if (!q.empty()) {
              task = std::move(q.back());  // steal the coldest task
              q.pop_back();
              break;
            }
          }
        }
        if (!task) continue;
        pending_--;
        active_++;
      }
      task();
      {
        std::lock_guard lk(mu_);
        active_--;
        if (pending_ == 0 && active_ == 0) idle_cv_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, idle_cv_;
  std::vector<std::deque<std::function<void()>>> queues_;
  std::vector<std::thread> threads_;
  size_t next_ = 0;
  size_t pending_ = 0;
  size_t active_ = 0;
  bool done_ = false;
};

// Single-producer single-consumer bounded queue with close semantics.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : cap_(capacity ? capacity : 1) {}

  void push(T item) {
    std::unique_lock lk(mu_);
    space_.wait(lk, [this] { return items_.size() < cap_ || closed_; });
    if (closed_) return;  // producer after close: drop
    items_.push_back(std::move(item));
    avail_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lk(mu_);
    avail_.wait(lk, [this] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    space_.notify_one();
    return item;
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    avail_.notify_all();
    space_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable avail_, space_;
  std::deque<T> items_;
  size_t cap_;
  bool closed_ = false;
};

}  // namespace tirtaint
