// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace voxstream {

// Multi-producer multi-consumer FIFO with a fixed capacity. push blocks while full, pop while empty.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  // False once closed.
  bool push(T v) {
    std::unique_lock lk(m_);
    not_full_.wait(lk, [&] { return closed_ || q_.size() < capacity_; });
    if (closed_) return false;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }
  // Never blocks; drops the oldest element when full. Returns true if something was dropped.
  bool push_drop_oldest(T v) {
    std::lock_guard lk(m_);
    if (closed_) return false;
    bool dropped = false;
    if (q_.size() >= capacity_) {
      q_.pop_front();
      dropped = true;
    }
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return dropped;
  }
  // Empty once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lk(m_);
    not_empty_.wait(lk, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }
  std::optional<T> try_pop() {
    std::lock_guard lk(m_);
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }
  void close() {
    std::lock_guard lk(m_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }
  std::size_t size() const {
    std::lock_guard lk(m_);
    return q_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  const std::size_t capacity_;
  mutable std::mutex m_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> q_;
  bool closed_ = false;
};

}  // namespace voxstream
