#pragma once

// Latest-value handoff between threads. Writers replace the value, readers
// get a shared pointer to an immutable snapshot; nothing is queued.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>

namespace vfg {

template <class T>
class Mailbox {
 public:
  struct Snapshot {
    std::shared_ptr<const T> value;
    std::uint64_t seq = 0;  // 0 = never published
    std::int64_t stamp_ns = 0;

    explicit operator bool() const { return value != nullptr; }
    const T& operator*() const { return *value; }
    const T* operator->() const { return value.get(); }
  };

  /// Returns the new sequence number (1 for the first publish).
  std::uint64_t publish(T value, std::int64_t stamp_ns) {
    return publish(std::make_shared<const T>(std::move(value)), stamp_ns);
  }

  std::uint64_t publish(std::shared_ptr<const T> value, std::int64_t stamp_ns) {
    std::uint64_t seq;
    {
      std::lock_guard lock(mu_);
      seq = ++current_.seq;
      current_.value = std::move(value);
      current_.stamp_ns = stamp_ns;
    }
    cv_.notify_all();
    return seq;
  }

  Snapshot latest() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  std::uint64_t seq() const {
    std::lock_guard lock(mu_);
    return current_.seq;
  }

  /// Blocks until something newer than `seen` is published or the timeout
  /// expires; returns the latest snapshot either way.
  template <class Rep, class Period>
  Snapshot wait_newer(std::uint64_t seen, std::chrono::duration<Rep, Period> timeout) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return current_.seq > seen; });
    return current_;
  }

  /// Wakes blocked readers without publishing (used on shutdown).
  void notify() const { cv_.notify_all(); }

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  Snapshot current_;
};

}  // namespace vfg
