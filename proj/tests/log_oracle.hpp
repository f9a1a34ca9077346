#pragma once

// Linear-scan model of the segmented ring: same byte budget per segment,
// whole-segment eviction, nothing else.

#include <deque>
#include <optional>
#include <vector>

#include "mez/memlog.hpp"
#include "support.hpp"

namespace testing {

class LogOracle {
public:
    LogOracle(std::size_t capacity, int segments)
        : budget_(capacity / static_cast<std::size_t>(segments)), ring_(static_cast<std::size_t>(segments))
    {
    }

    bool append(const mez::FramePtr& f)
    {
        if (last_ && f->ts() <= *last_)
            return false;
        const std::size_t sz = mez::serialized_size(*f);
        if (bytes_of(ring_[active_]) + sz > budget_) {
            active_ = (active_ + 1) % ring_.size();
            ring_[active_].clear();
        }
        ring_[active_].push_back(f);
        last_ = f->ts();
        return true;
    }

    std::vector<mez::FramePtr> all() const
    {
        std::vector<mez::FramePtr> out;
        for (std::size_t k = 1; k <= ring_.size(); ++k)
            for (const auto& f : ring_[(active_ + k) % ring_.size()])
                out.push_back(f);
        return out;
    }

    mez::FramePtr get(mez::Timestamp ts) const
    {
        for (const auto& f : all())
            if (f->ts() == ts)
                return f;
        return nullptr;
    }

    std::vector<mez::FramePtr> range(mez::Timestamp a, mez::Timestamp b) const
    {
        std::vector<mez::FramePtr> out;
        for (const auto& f : all())
            if (a <= f->ts() && f->ts() <= b)
                out.push_back(f);
        return out;
    }

    std::size_t resident() const
    {
        std::size_t n = 0;
        for (const auto& s : ring_)
            n += bytes_of(s);
        return n;
    }

private:
    static std::size_t bytes_of(const std::vector<mez::FramePtr>& s)
    {
        std::size_t n = 0;
        for (const auto& f : s)
            n += mez::serialized_size(*f);
        return n;
    }

    std::size_t budget_;
    std::vector<std::vector<mez::FramePtr>> ring_;
    std::size_t active_ = 0;
    std::optional<mez::Timestamp> last_;
};

struct OracleTally {
    int ops = 0;
    int mismatches = 0;
    int stale_attempts = 0;
    int stale_accepted = 0;
    int capacity_violations = 0;
    int evictions_seen = 0;
};

inline bool same_frames(const std::vector<mez::FramePtr>& a, const std::vector<mez::FramePtr>& b)
{
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(*a[i] == *b[i]))
            return false;
    return true;
}

// Random append/get/get_range sequence against the oracle.
inline OracleTally run_log_oracle(std::uint64_t seed, int ops, std::size_t capacity = 48 << 10, int segments = 4)
{
    mez::Rng rng(seed);
    mez::LogConfig cfg;
    cfg.capacity_bytes = capacity;
    cfg.segment_count = segments;
    auto log = mez::MemLog::create(cfg).value();
    LogOracle oracle(capacity, segments);
    OracleTally t;
    std::int64_t last = 0;
    std::size_t prev_count = 0;
    for (int i = 0; i < ops; ++i) {
        ++t.ops;
        const auto roll = rng.below(10);
        bool ok = true;
        if (roll < 6) {
            const bool stale = last > 0 && rng.below(8) == 0;
            const std::int64_t ts = stale ? last - static_cast<std::int64_t>(rng.below(3)) : last + 1 + static_cast<std::int64_t>(rng.below(5));
            const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
            auto f = std::make_shared<const mez::Frame>(
                gray_frame(ts, w, h, static_cast<std::uint8_t>(rng.below(256)), "oracle"));
            const bool want = oracle.append(f);
            const auto got = log->append(f);
            ok = got && (*got == mez::AppendOutcome::appended) == want;
            if (stale) {
                ++t.stale_attempts;
                t.stale_accepted += got && *got == mez::AppendOutcome::appended;
            }
            if (want)
                last = ts;
            if (log->size() < prev_count + (want ? 1 : 0))
                ++t.evictions_seen;
            prev_count = log->size();
        } else if (roll < 8) {
            const mez::Timestamp ts{static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(last + 10)))};
            const auto want = oracle.get(ts);
            const auto got = log->get(ts);
            ok = want ? (got && **got == *want) : (!got && got.code() == mez::Errc::not_found);
        } else {
            const auto a = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(last + 10)));
            const auto b = a + static_cast<std::int64_t>(rng.below(400));
            const auto got = log->get_range({a}, {b});
            const auto all = oracle.all();
            ok = got && same_frames(got->frames, oracle.range({a}, {b})) &&
                 got->truncated_start == (!all.empty() && mez::Timestamp{a} < all.front()->ts());
        }
        ok = ok && log->resident_bytes() == oracle.resident() && log->size() == oracle.all().size();
        if (log->resident_bytes() > capacity)
            ++t.capacity_violations;
        if (!ok)
            ++t.mismatches;
    }
    return t;
}

}  // namespace testing
