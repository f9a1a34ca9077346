#include "mez/controller.hpp"

#include <spdlog/fmt/fmt.h>

#include <cmath>
#include <vector>

#include "mez/stats.hpp"

namespace mez {

ControllerConfig ControllerConfig::defaults_for(const ProfileTable& profile, const LinearLatencyModel& model)
{
    ControllerConfig c;
    const double bytes_per_ms = 1.0 / model.slope;
    c.k1 = 0.1 * bytes_per_ms;
    c.k2 = 1.0 * bytes_per_ms;
    c.integral_clamp_bytes = 2.0 * profile.max_size();
    return c;
}

Status ControllerConfig::validate() const
{
    if (!(k1 >= 0) || !(k2 >= 0))
        return make_error(Errc::invalid_argument, "gains must be non-negative");
    if (!(error_threshold_ms > 0))
        return make_error(Errc::invalid_argument, "error_threshold_ms must be positive");
    if (!(integral_clamp_bytes > 0))
        return make_error(Errc::invalid_argument, "integral_clamp_bytes must be positive");
    if (sample_window < 1)
        return make_error(Errc::invalid_argument, "sample_window must be at least 1");
    if (setpoint_margin_ms && !(*setpoint_margin_ms >= 0))
        return make_error(Errc::invalid_argument, "setpoint margin must be non-negative");
    return {};
}

LatencyController::LatencyController(ControllerConfig config, std::shared_ptr<const ProfileTable> profile,
                                     LinearLatencyModel model)
    : config_(std::move(config)), profile_(std::move(profile)), model_(model)
{
}

double LatencyController::setpoint_ms() const
{
    return target_ ? target_->latency_max_ms() - config_.margin() : 0.0;
}

void LatencyController::set_target(const QosBound& bound)
{
    target_ = bound;
    integral_ = 0;
    auto nominal = size_for_latency(model_, setpoint_ms(), bounds_of(*profile_));
    nominal_ = nominal ? *nominal : profile_->min_size();
    switch_to(KnobSetting{});
}

void LatencyController::switch_to(const KnobSetting& s)
{
    current_ = s;
    ++epoch_;
    samples_.clear();
}

bool LatencyController::observe_latency(double latency_ms, std::optional<std::uint64_t> epoch)
{
    if (epoch && *epoch != epoch_)
        return false;
    samples_.push_back(latency_ms);
    while (samples_.size() > static_cast<std::size_t>(config_.sample_window))
        samples_.pop_front();
    return true;
}

std::optional<double> LatencyController::sampled_p95() const
{
    if (samples_.empty())
        return std::nullopt;
    const std::vector<double> v(samples_.begin(), samples_.end());
    return percentile(v, 95).value();
}

double LatencyController::current_accuracy() const
{
    if (auto e = profile_->find(current_))
        return e->accuracy_pct;
    return current_.is_identity() ? 100.0 : 0.0;
}

StepResult LatencyController::control_step(Timestamp now)
{
    StepResult r;
    r.setting = current_;
    const auto sampled = sampled_p95();
    if (!target_ || !sampled)
        return r;
    r.p95_ms = *sampled;
    const double error = *sampled - setpoint_ms();
    if (error <= config_.error_threshold_ms)
        return r;

    double e = error;
    if (config_.normalize_error && *sampled > 0)
        e = error * model_.predict(current_size()) / *sampled;
    integral_ += e;
    if (config_.k2 > 0 && std::abs(config_.k2 * integral_) > config_.integral_clamp_bytes)
        integral_ = std::copysign(config_.integral_clamp_bytes / config_.k2, integral_);

    // Positive error shrinks the frame.
    r.image_size = nominal_ - (config_.k1 * e + config_.k2 * integral_);

    const auto entry = profile_->lookup_by_size(r.image_size);
    KnobSetting next;
    if (entry && entry->accuracy_pct >= target_->accuracy_min_pct()) {
        next = profile_->lookup_by_accuracy(entry->accuracy_pct).value();
        r.kind = StepResult::Kind::setting;
        r.best_accuracy = entry->accuracy_pct;
    } else {
        const auto smallest = profile_->size_index().begin()->second;
        next = smallest.setting;
        r.kind = StepResult::Kind::infeasible;
        // Best the profile can offer at any size.
        r.best_accuracy = profile_->size_index().rbegin()->second.accuracy_pct;
        ++infeasible_count_;
        if (sink_)
            sink_(format_infeasible(now, r.best_accuracy));
    }
    if (next != current_) {
        switch_to(next);
        r.changed = true;
        if (sink_)
            sink_(format_knob_change(now, next, *sampled));
    }
    r.setting = current_;
    return r;
}

Result<std::optional<Frame>> LatencyController::process_frame(const Frame& f, FrameDiffState& diff) const
{
    return apply_setting(f, current_, diff);
}

std::string format_knob_change(Timestamp ts, const KnobSetting& s, double p95_ms)
{
    return fmt::format("ts={} event=knob_change setting={} p95_ms={:.3f}", ts.micros, s.to_string(), p95_ms);
}

std::string format_infeasible(Timestamp ts, double best_accuracy)
{
    return fmt::format("ts={} event=infeasible best_acc={:.3f}", ts.micros, best_accuracy);
}

}  // namespace mez
