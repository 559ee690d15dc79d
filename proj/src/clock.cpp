#include "diavgeia/clock.hpp"

#include <algorithm>
#include <cmath>

#include "diavgeia/errors.hpp"

namespace diavgeia {

TokenBucket::TokenBucket(Clock& clock, double rate_per_second, unsigned burst) : clock_(clock)
{
    if (!(rate_per_second > 0.0) || !std::isfinite(rate_per_second)) throw InvalidArgument("rate limit must be positive");
    if (burst == 0) throw InvalidArgument("burst must be at least 1");
    // Rounded up so the realised rate never exceeds the configured one.
    interval_ = static_cast<std::int64_t>(std::ceil(1e9 / rate_per_second));
    tolerance_ = interval_ * static_cast<std::int64_t>(burst - 1);
}

std::int64_t TokenBucket::acquire()
{
    std::lock_guard lock(mu_);
    std::int64_t now = clock_.now_ns();
    if (!started_) {
        tat_ = now;
        started_ = true;
    }
    tat_ = std::max(tat_, now - tolerance_);
    const std::int64_t earliest = tat_ - tolerance_;
    if (now < earliest) {
        clock_.sleep_ns(earliest - now);
        now = std::max(clock_.now_ns(), earliest);
    }
    tat_ += interval_;
    grants_.push_back(now);
    return now;
}

std::vector<std::int64_t> TokenBucket::grants() const
{
    std::lock_guard lock(mu_);
    return grants_;
}

}  // namespace diavgeia
