#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "mez/frame.hpp"

namespace mez {

/// Per-frame stage timestamps collected in-process for latency breakdowns.
/// Publish time is the frame timestamp itself.
class Tracer {
public:
    enum class Stage { appended, processed, edge_received };

    void mark(const std::string& camera, Timestamp frame_ts, Stage stage, Timestamp at);
    void mark_sent(const std::string& camera, Timestamp frame_ts, std::uint64_t subscription, Timestamp at);
    void mark_received(const std::string& camera, Timestamp frame_ts, std::uint64_t subscription, Timestamp at);

    /// Milliseconds spent in each stage for one delivered (frame, subscription).
    struct Sample {
        double publish = 0;
        double controller = 0;
        double network = 0;
        double broker = 0;
        double subscribe = 0;
        double total() const { return publish + controller + network + broker + subscribe; }
    };

    /// Deliveries with every stage recorded.
    std::vector<Sample> samples() const;
    void clear();

private:
    using Key = std::pair<std::string, std::int64_t>;
    struct Entry {
        std::int64_t stages[3] = {0, 0, 0};
        std::map<std::uint64_t, std::pair<std::int64_t, std::int64_t>> deliveries;
    };

    mutable std::mutex mu_;
    std::map<Key, Entry> entries_;
};

/// Process-wide tracer; null unless a benchmark installs one.
Tracer* active_tracer();
void set_active_tracer(Tracer* t);

}  // namespace mez
