#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mez/knob_setting.hpp"

namespace mez {

struct ProfileEntry {
    KnobSetting setting;
    double size_bytes = 0;
    double accuracy_pct = 0;

    bool operator==(const ProfileEntry&) const = default;
};

/// Immutable characterization table with the two lookups the controller uses.
///
/// size_index holds the Pareto frontier: an entry is kept only if no entry of
/// smaller or equal size reaches the same accuracy. At equal sizes the most
/// accurate entry wins.
class ProfileTable {
public:
    /// Errc::empty_profile, or Errc::invalid_argument for out-of-range values.
    static Result<ProfileTable> build(std::vector<ProfileEntry> entries);

    const std::vector<ProfileEntry>& entries() const { return entries_; }
    const std::map<double, ProfileEntry>& size_index() const { return size_index_; }

    /// Floor query: entry with the largest size <= size_bytes.
    std::optional<ProfileEntry> lookup_by_size(double size_bytes) const;
    Result<KnobSetting> lookup_by_accuracy(double accuracy_pct) const;
    std::optional<ProfileEntry> find(const KnobSetting& s) const;

    /// Frontier entries, ascending by size (and accuracy).
    std::vector<ProfileEntry> frontier() const;

    double min_size() const { return size_index_.begin()->first; }
    double max_size() const { return size_index_.rbegin()->first; }
    double max_accuracy() const { return size_index_.rbegin()->second.accuracy_pct; }

    /// Profiled size of a setting; identity or unknown settings map to the largest size.
    double profiled_size(const KnobSetting& s) const;

private:
    std::vector<ProfileEntry> entries_;
    std::map<double, ProfileEntry> size_index_;
    std::unordered_map<double, ProfileEntry> accuracy_index_;
    std::unordered_map<KnobSetting, std::size_t> by_setting_;
};

Result<ProfileTable> parse_profile(std::string_view text);
Result<ProfileTable> load_profile(const std::filesystem::path& path);
std::string format_profile(const ProfileTable& t);
Status save_profile(const ProfileTable& t, const std::filesystem::path& path);

struct LinearLatencyModel {
    double slope = 0;  // ms per byte
    double intercept = 0;  // ms

    double predict(double size_bytes) const { return intercept + slope * size_bytes; }
};

using LatencyPoint = std::pair<double, double>;  // (size_bytes, latency_ms)

/// Ordinary least squares. Errc::degenerate_points when sizes do not vary or the slope is not positive.
Result<LinearLatencyModel> fit_latency_model(std::span<const LatencyPoint> points);

struct SizeBounds {
    double min_size;
    double max_size;
};

/// Inverse of the model, clamped to `bounds` when given. Errc::below_intercept when latency <= intercept.
Result<double> size_for_latency(const LinearLatencyModel& m, double latency_ms,
                                std::optional<SizeBounds> bounds = std::nullopt);

inline SizeBounds bounds_of(const ProfileTable& t) { return {t.min_size(), t.max_size()}; }

/// Lines "size_bytes<TAB>latency_ms"; '#' comments.
Result<std::vector<LatencyPoint>> parse_latency_calibration(std::string_view text);
Result<std::vector<LatencyPoint>> load_latency_calibration(const std::filesystem::path& path);

struct SyntheticProfileOptions {
    double native_size_bytes = 970e3;
    std::uint64_t seed = 7;
    // Entries below this accuracy are left out.
    double min_accuracy_pct = 90.0;
    // Sample this many settings (identity always included); all when unset.
    std::optional<std::size_t> count;
};

/// Synthetic profile: per-knob multiplicative size factors and additive accuracy
/// penalties with small seeded noise. Identity is exactly (native, 100%).
std::vector<ProfileEntry> synthesize_profile(const SyntheticProfileOptions& opts = {});

}  // namespace mez
