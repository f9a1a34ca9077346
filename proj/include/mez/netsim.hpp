#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mez/controller.hpp"
#include "mez/profile.hpp"
#include "mez/rng.hpp"
#include "mez/stats.hpp"

namespace mez {

struct InterferenceStep {
    double t_ms = 0;
    double multiplier = 1;
};

/// Affine base latency scaled by a piecewise-constant interference multiplier, with uniform jitter.
class Channel {
public:
    Channel(LinearLatencyModel base, double jitter, std::uint64_t seed);

    /// Errc::non_monotonic_schedule unless t_ms is after every scheduled step.
    Status set_interference_step(double t_ms, double multiplier);
    double multiplier_at(double t_ms) const;
    double transmit(double size_bytes, double now_ms);

    const LinearLatencyModel& base() const { return base_; }
    double jitter() const { return jitter_; }
    const std::vector<InterferenceStep>& schedule() const { return schedule_; }

private:
    LinearLatencyModel base_;
    double jitter_;
    Rng rng_;
    std::vector<InterferenceStep> schedule_;
};

struct LatencyRecord {
    double ts_sent_ms = 0;
    double ts_received_ms = 0;
    double size_bytes = 0;
    std::string camera_id;
    KnobSetting setting;
    double accuracy_pct = 0;

    double latency_ms() const { return ts_received_ms - ts_sent_ms; }
};

struct SeriesPoint {
    double t_ms = 0;
    double p95_ms = 0;
    KnobSetting setting;
    double accuracy_pct = 0;
    std::string camera_id;
};

struct Scenario {
    LinearLatencyModel base;
    double jitter = 0.05;
    std::uint64_t seed = 1;
    std::vector<InterferenceStep> schedule;
    std::shared_ptr<const ProfileTable> profile;
    // Model the controller inverts; the channel base when unset.
    std::optional<LinearLatencyModel> model;
    double latency_max_ms = 100;
    double accuracy_min_pct = 95;
    double fps = 5;
    double duration_s = 30;
    int cameras = 1;
    bool controller_enabled = true;
    std::optional<ControllerConfig> controller;
    // Frames per series p95 window.
    int series_window = 20;
};

struct SimResult {
    std::vector<SeriesPoint> series;
    std::vector<LatencyRecord> records;
    std::vector<std::string> log;
    std::uint64_t infeasible_steps = 0;
    std::uint64_t knob_changes = 0;
};

Result<SimResult> run_closed_loop(const Scenario& s);

/// Nearest-rank p95 of records sent at or after start_ms, bucketed into windows by send time.
std::vector<double> windowed_p95(const std::vector<LatencyRecord>& records, double start_ms, double window_ms = 1000);

/// Fraction of windows whose p95 is strictly below `bound_ms` (1 when there are no windows).
double window_pass_fraction(const std::vector<LatencyRecord>& records, double start_ms, double bound_ms,
                            double window_ms = 1000);

/// JSON scenario; relative profile paths resolve against the file's directory.
Result<Scenario> load_scenario(const std::filesystem::path& path);
Result<Scenario> parse_scenario(std::string_view json, const std::filesystem::path& base_dir = {});

/// Single-node latency points of the JAAD columns (size_bytes, ms).
inline constexpr LatencyPoint kJaadSingleNode[] = {{610e3, 32.09}, {760e3, 35.16}, {970e3, 46.09}};
/// DukeMTMC complex single-node point.
inline constexpr LatencyPoint kDukeComplexSingleNode = {1740e3, 72.72};

/// Built-in scenarios: "jaad-step" (6.5x at 5 s, 100 ms / 96%), "duke-10x" (8.4x at 5 s, 10x at 15 s,
/// 100 ms / 95.8%), "jaad-nodes-<col>" with col in {simple, medium, complex} and `nodes` cameras
/// under the node-count multiplier.
Result<Scenario> preset_scenario(std::string_view name, int nodes = 1, std::uint64_t seed = 1);

std::string series_csv(const SimResult& r, bool with_camera = false);

}  // namespace mez
