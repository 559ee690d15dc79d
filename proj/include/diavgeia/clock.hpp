#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

namespace diavgeia {

/// Monotonic time in nanoseconds plus a wall clock in Unix milliseconds.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ns() const = 0;
    virtual void sleep_ns(std::int64_t ns) = 0;
    virtual std::int64_t wall_ms() const = 0;
};

class SystemClock final : public Clock {
  public:
    std::int64_t now_ns() const override
    {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch()).count();
    }
    void sleep_ns(std::int64_t ns) override
    {
        if (ns > 0) std::this_thread::sleep_for(std::chrono::nanoseconds(ns));
    }
    std::int64_t wall_ms() const override
    {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
    }
};

/// Time moves only when someone sleeps.
class FakeClock final : public Clock {
  public:
    explicit FakeClock(std::int64_t start_wall_ms = 1609459200000) : wall_base_(start_wall_ms) {}

    std::int64_t now_ns() const override { return now_.load(); }
    void sleep_ns(std::int64_t ns) override
    {
        if (ns > 0) now_.fetch_add(ns);
    }
    std::int64_t wall_ms() const override { return wall_base_ + now_.load() / 1'000'000; }
    void advance_ns(std::int64_t ns) { now_.fetch_add(ns); }

  private:
    std::atomic<std::int64_t> now_{0};
    std::int64_t wall_base_;
};

/// Token bucket in its virtual-scheduling form: a request is admitted once
/// the clock reaches its theoretical arrival time minus the burst allowance.
class TokenBucket {
  public:
    TokenBucket(Clock& clock, double rate_per_second, unsigned burst = 1);

    /// Blocks (via the clock) until a request may be sent; returns the grant time.
    std::int64_t acquire();
    std::int64_t interval_ns() const noexcept { return interval_; }
    std::vector<std::int64_t> grants() const;

  private:
    Clock& clock_;
    std::int64_t interval_;
    std::int64_t tolerance_;
    std::int64_t tat_ = 0;
    bool started_ = false;
    mutable std::mutex mu_;
    std::vector<std::int64_t> grants_;
};

}  // namespace diavgeia
