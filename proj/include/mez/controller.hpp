#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "mez/frame.hpp"
#include "mez/knobs.hpp"
#include "mez/profile.hpp"

namespace mez {

struct ControllerConfig {
    double k1 = 0;  // bytes per ms of error
    double k2 = 0;  // bytes per ms per sample
    double error_threshold_ms = 5.0;
    double integral_clamp_bytes = 1;
    int sample_window = 20;
    // Regulate to latency_max - margin; unset means error_threshold_ms.
    std::optional<double> setpoint_margin_ms;
    // Rescale the error to base-channel milliseconds before the PI terms.
    bool normalize_error = true;

    static ControllerConfig defaults_for(const ProfileTable& profile, const LinearLatencyModel& model);
    Status validate() const;
    double margin() const { return setpoint_margin_ms.value_or(error_threshold_ms); }
};

struct StepResult {
    enum class Kind { no_change, setting, infeasible };
    Kind kind = Kind::no_change;
    // Setting in force after the step (fallback setting when infeasible).
    KnobSetting setting;
    bool changed = false;
    double best_accuracy = 0;
    double image_size = 0;
    double p95_ms = 0;
};

/// PI latency controller for one camera.
class LatencyController {
public:
    using LogSink = std::function<void(const std::string&)>;

    LatencyController(ControllerConfig config, std::shared_ptr<const ProfileTable> profile,
                      LinearLatencyModel model);

    void set_target(const QosBound& bound);
    const std::optional<QosBound>& target() const { return target_; }

    /// Samples tagged with an older epoch are ignored. Returns whether the sample was kept.
    bool observe_latency(double latency_ms, std::optional<std::uint64_t> epoch = std::nullopt);
    std::optional<double> sampled_p95() const;

    StepResult control_step(Timestamp now = Timestamp::now());

    Result<std::optional<Frame>> process_frame(const Frame& f, FrameDiffState& diff) const;

    const KnobSetting& current_setting() const { return current_; }
    double current_size() const { return profile_->profiled_size(current_); }
    double current_accuracy() const;
    std::uint64_t epoch() const { return epoch_; }
    double integral() const { return integral_; }
    double nominal_size() const { return nominal_; }
    double setpoint_ms() const;
    const ControllerConfig& config() const { return config_; }
    const ProfileTable& profile() const { return *profile_; }
    const LinearLatencyModel& model() const { return model_; }
    std::uint64_t infeasible_count() const { return infeasible_count_; }

    void set_log_sink(LogSink sink) { sink_ = std::move(sink); }

private:
    void switch_to(const KnobSetting& s);

    ControllerConfig config_;
    std::shared_ptr<const ProfileTable> profile_;
    LinearLatencyModel model_;
    std::optional<QosBound> target_;
    double nominal_ = 0;
    double integral_ = 0;
    KnobSetting current_;
    std::uint64_t epoch_ = 0;
    std::deque<double> samples_;
    std::uint64_t infeasible_count_ = 0;
    LogSink sink_;
};

std::string format_knob_change(Timestamp ts, const KnobSetting& s, double p95_ms);
std::string format_infeasible(Timestamp ts, double best_accuracy);

}  // namespace mez
