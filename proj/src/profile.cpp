#include "mez/profile.hpp"

#include <algorithm>
#include <cmath>

#include "mez/rng.hpp"
#include "mez/text.hpp"

namespace mez {

Result<ProfileTable> ProfileTable::build(std::vector<ProfileEntry> entries)
{
    if (entries.empty())
        return make_error(Errc::empty_profile, "profile has no entries");
    ProfileTable t;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!(e.size_bytes > 0) || !std::isfinite(e.size_bytes))
            return make_error(Errc::invalid_argument, "size must be positive: " + e.setting.to_string());
        if (!(e.accuracy_pct > 0 && e.accuracy_pct <= 100))
            return make_error(Errc::invalid_argument, "accuracy must be in (0, 100]: " + e.setting.to_string());
        t.by_setting_[e.setting] = i;
    }

    std::map<double, ProfileEntry> best_at_size;
    for (const auto& e : entries) {
        auto [it, fresh] = best_at_size.try_emplace(e.size_bytes, e);
        if (!fresh && e.accuracy_pct > it->second.accuracy_pct)
            it->second = e;
    }
    double best = -1;
    for (const auto& [size, e] : best_at_size) {
        if (e.accuracy_pct <= best)
            continue;
        best = e.accuracy_pct;
        t.size_index_.emplace_hint(t.size_index_.end(), size, e);
        auto [it, fresh] = t.accuracy_index_.try_emplace(e.accuracy_pct, e);
        if (!fresh && e.size_bytes > it->second.size_bytes)
            it->second = e;
    }
    t.entries_ = std::move(entries);
    return t;
}

std::optional<ProfileEntry> ProfileTable::lookup_by_size(double size_bytes) const
{
    auto it = size_index_.upper_bound(size_bytes);
    if (it == size_index_.begin())
        return std::nullopt;
    return std::prev(it)->second;
}

Result<KnobSetting> ProfileTable::lookup_by_accuracy(double accuracy_pct) const
{
    auto it = accuracy_index_.find(accuracy_pct);
    if (it == accuracy_index_.end())
        return make_error(Errc::unknown_accuracy, "no entry with accuracy " + text::fmt_double(accuracy_pct));
    return it->second.setting;
}

std::optional<ProfileEntry> ProfileTable::find(const KnobSetting& s) const
{
    auto it = by_setting_.find(s);
    if (it == by_setting_.end())
        return std::nullopt;
    return entries_[it->second];
}

std::vector<ProfileEntry> ProfileTable::frontier() const
{
    std::vector<ProfileEntry> out;
    out.reserve(size_index_.size());
    for (const auto& [_, e] : size_index_)
        out.push_back(e);
    return out;
}

double ProfileTable::profiled_size(const KnobSetting& s) const
{
    if (auto e = find(s))
        return e->size_bytes;
    return max_size();
}

Result<ProfileTable> parse_profile(std::string_view content)
{
    std::vector<ProfileEntry> entries;
    int line_no = 0;
    for (std::string_view line : text::split(content, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (text::trim(line).empty() || line.front() == '#')
            continue;
        const auto err = [&](const std::string& what) {
            return make_error(Errc::parse_error, "line " + std::to_string(line_no) + ": " + what);
        };
        const auto fields = text::split(line, '\t');
        if (fields.size() != 3)
            return err("expected setting, size_bytes and accuracy_pct separated by tabs");
        auto setting = KnobSetting::parse(text::trim(fields[0]));
        if (!setting)
            return err(setting.error().message);
        const auto size = text::to_double(fields[1]);
        if (!size || !(*size > 0))
            return err("size_bytes must be a positive number");
        const auto acc = text::to_double(fields[2]);
        if (!acc || !(*acc > 0 && *acc <= 100))
            return err("accuracy_pct must be in (0, 100]");
        entries.push_back({*setting, *size, *acc});
    }
    return ProfileTable::build(std::move(entries));
}

Result<ProfileTable> load_profile(const std::filesystem::path& path)
{
    auto content = text::read_file(path);
    if (!content)
        return content.error();
    return parse_profile(*content);
}

std::string format_profile(const ProfileTable& t)
{
    std::string out = "# setting\tsize_bytes\taccuracy_pct\n";
    for (const auto& e : t.entries()) {
        out += e.setting.to_string();
        out += '\t';
        out += text::fmt_double(e.size_bytes);
        out += '\t';
        out += text::fmt_double(e.accuracy_pct);
        out += '\n';
    }
    return out;
}

Status save_profile(const ProfileTable& t, const std::filesystem::path& path)
{
    return text::write_file(path, format_profile(t));
}

Result<LinearLatencyModel> fit_latency_model(std::span<const LatencyPoint> points)
{
    if (points.size() < 2)
        return make_error(Errc::degenerate_points, "need at least two points");
    const double n = static_cast<double>(points.size());
    double mx = 0, my = 0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0)
        return make_error(Errc::degenerate_points, "all sizes are equal");
    const double slope = sxy / sxx;
    if (!(slope > 0))
        return make_error(Errc::degenerate_points, "fitted slope is not positive");
    return LinearLatencyModel{slope, my - slope * mx};
}

Result<double> size_for_latency(const LinearLatencyModel& m, double latency_ms, std::optional<SizeBounds> bounds)
{
    if (!(latency_ms > m.intercept))
        return make_error(Errc::below_intercept, "latency " + text::fmt_double(latency_ms) +
                                                     " ms is not above the intercept " +
                                                     text::fmt_double(m.intercept));
    double size = (latency_ms - m.intercept) / m.slope;
    if (bounds)
        size = std::clamp(size, bounds->min_size, bounds->max_size);
    return size;
}

Result<std::vector<LatencyPoint>> parse_latency_calibration(std::string_view content)
{
    std::vector<LatencyPoint> out;
    int line_no = 0;
    for (std::string_view line : text::split(content, '\n')) {
        ++line_no;
        if (text::trim(line).empty() || line.front() == '#')
            continue;
        const auto fields = text::split(text::trim(line), '\t');
        const auto size = fields.size() == 2 ? text::to_double(fields[0]) : std::nullopt;
        const auto lat = fields.size() == 2 ? text::to_double(fields[1]) : std::nullopt;
        if (!size || !lat || !(*size > 0) || !(*lat >= 0))
            return make_error(Errc::parse_error,
                              "line " + std::to_string(line_no) + ": expected size_bytes<TAB>latency_ms");
        out.emplace_back(*size, *lat);
    }
    return out;
}

Result<std::vector<LatencyPoint>> load_latency_calibration(const std::filesystem::path& path)
{
    auto content = text::read_file(path);
    if (!content)
        return content.error();
    return parse_latency_calibration(*content);
}

namespace {

struct Factor {
    double size;
    double penalty;
};

constexpr Factor kResFactor[] = {{1.0, 0.0}, {0.4643, 0.5}, {0.2389, 1.2}, {0.1062, 2.5}, {0.0562, 4.5}};
constexpr Factor kCsFactor[] = {{1.0, 0.0}, {0.40, 0.8}, {0.92, 1.5}, {0.85, 1.2}, {0.87, 1.3}};
constexpr Factor kBlurFactor[] = {{1.0, 0.0}, {0.80, 0.6}, {0.72, 1.2}, {0.68, 1.8}, {0.62, 3.0}};
constexpr Factor kFdFactor[] = {{1.0, 0.0}, {1.0, 0.0}, {0.9, 0.8}, {0.8, 1.8}, {0.7, 3.0}, {0.6, 4.5}};

}  // namespace

std::vector<ProfileEntry> synthesize_profile(const SyntheticProfileOptions& opts)
{
    Rng rng(opts.seed);
    std::vector<ProfileEntry> all;
    for (const KnobSetting& s : all_knob_settings()) {
        const Factor parts[] = {kResFactor[static_cast<int>(s.resolution)],
                                kCsFactor[static_cast<int>(s.colorspace)], kBlurFactor[static_cast<int>(s.blur)],
                                kFdFactor[static_cast<int>(s.framediff)]};
        double f = 1.0, acc = 100.0;
        for (const auto& p : parts) {
            f *= p.size;
            acc -= p.penalty;
        }
        if (!s.is_identity()) {
            f *= 1.0 + rng.uniform(-0.03, 0.03);
            acc += rng.uniform(-0.3, 0.3);
        }
        acc = std::min(acc, 100.0);
        if (acc < opts.min_accuracy_pct)
            continue;
        all.push_back({s, std::floor(opts.native_size_bytes * f), acc});
    }
    if (!opts.count || *opts.count >= all.size())
        return all;

    // Identity is generated first; keep it and draw the rest without replacement.
    std::vector<ProfileEntry> out{all.front()};
    std::vector<ProfileEntry> rest(all.begin() + 1, all.end());
    for (std::size_t i = 0; i + 1 < *opts.count && !rest.empty(); ++i) {
        const std::size_t j = rng.below(rest.size());
        out.push_back(rest[j]);
        rest[j] = rest.back();
        rest.pop_back();
    }
    return out;
}

}  // namespace mez
