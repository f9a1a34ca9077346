#include "mez/trace.hpp"

#include <atomic>

namespace mez {

namespace {
std::atomic<Tracer*> g_tracer{nullptr};
}

Tracer* active_tracer() { return g_tracer.load(std::memory_order_acquire); }
void set_active_tracer(Tracer* t) { g_tracer.store(t, std::memory_order_release); }

void Tracer::mark(const std::string& camera, Timestamp frame_ts, Stage stage, Timestamp at)
{
    std::lock_guard lk(mu_);
    entries_[{camera, frame_ts.micros}].stages[static_cast<int>(stage)] = at.micros;
}

void Tracer::mark_sent(const std::string& camera, Timestamp frame_ts, std::uint64_t subscription, Timestamp at)
{
    std::lock_guard lk(mu_);
    entries_[{camera, frame_ts.micros}].deliveries[subscription].first = at.micros;
}

void Tracer::mark_received(const std::string& camera, Timestamp frame_ts, std::uint64_t subscription, Timestamp at)
{
    std::lock_guard lk(mu_);
    entries_[{camera, frame_ts.micros}].deliveries[subscription].second = at.micros;
}

std::vector<Tracer::Sample> Tracer::samples() const
{
    std::lock_guard lk(mu_);
    std::vector<Sample> out;
    for (const auto& [key, e] : entries_) {
        const std::int64_t t0 = key.second;
        const auto [t1, t2, t3] = e.stages;
        if (!t1 || !t2 || !t3)
            continue;
        for (const auto& [_, d] : e.deliveries) {
            if (!d.first || !d.second)
                continue;
            Sample s;
            s.publish = (t1 - t0) / 1000.0;
            s.controller = (t2 - t1) / 1000.0;
            s.network = (t3 - t2) / 1000.0;
            s.broker = (d.first - t3) / 1000.0;
            s.subscribe = (d.second - d.first) / 1000.0;
            out.push_back(s);
        }
    }
    return out;
}

void Tracer::clear()
{
    std::lock_guard lk(mu_);
    entries_.clear();
}

}  // namespace mez
