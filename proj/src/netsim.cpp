#include "mez/netsim.hpp"

#include <json.hpp>
#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <queue>
#include <tuple>

#include "mez/text.hpp"

namespace mez {

Channel::Channel(LinearLatencyModel base, double jitter, std::uint64_t seed)
    : base_(base), jitter_(jitter), rng_(seed)
{
}

Status Channel::set_interference_step(double t_ms, double multiplier)
{
    if (!schedule_.empty() && !(t_ms > schedule_.back().t_ms))
        return make_error(Errc::non_monotonic_schedule,
                          "step at " + text::fmt_double(t_ms) + " ms is not after the previous step");
    if (!(multiplier >= 1.0))
        return make_error(Errc::invalid_argument, "interference multiplier must be >= 1");
    schedule_.push_back({t_ms, multiplier});
    return {};
}

double Channel::multiplier_at(double t_ms) const
{
    double m = 1.0;
    for (const auto& s : schedule_) {
        if (t_ms < s.t_ms)
            break;
        m = s.multiplier;
    }
    return m;
}

double Channel::transmit(double size_bytes, double now_ms)
{
    const double u = jitter_ > 0 ? rng_.uniform(-jitter_, jitter_) : 0.0;
    return base_.predict(size_bytes) * multiplier_at(now_ms) * (1.0 + u);
}

namespace {

struct Event {
    double t_ms;
    int camera;
    int kind;  // 0 send, 1 deliver
    std::uint64_t seq;
    // delivery payload
    double sent_ms = 0;
    double latency_ms = 0;
    double size_bytes = 0;
    std::uint64_t epoch = 0;
    KnobSetting setting;
    double accuracy = 0;

    Event(double t, int cam, int k, std::uint64_t q) : t_ms(t), camera(cam), kind(k), seq(q) {}

    bool operator>(const Event& o) const
    {
        return std::tie(t_ms, camera, kind, seq) > std::tie(o.t_ms, o.camera, o.kind, o.seq);
    }
};

struct SimCamera {
    std::string id;
    std::unique_ptr<LatencyController> ctl;
    std::deque<double> recent;
};

double accuracy_of(const ProfileTable& p, const KnobSetting& s)
{
    if (auto e = p.find(s))
        return e->accuracy_pct;
    return s.is_identity() ? 100.0 : 0.0;
}

}  // namespace

Result<SimResult> run_closed_loop(const Scenario& s)
{
    if (!s.profile)
        return make_error(Errc::invalid_argument, "scenario has no profile");
    if (!(s.fps > 0) || !(s.duration_s >= 0) || s.cameras < 1 || s.series_window < 1)
        return make_error(Errc::invalid_argument, "fps, duration, cameras or series window out of range");
    auto bound = QosBound::make(s.latency_max_ms, s.accuracy_min_pct);
    if (!bound)
        return bound.error();

    Channel channel(s.base, s.jitter, s.seed);
    for (const auto& st : s.schedule) {
        auto ok = channel.set_interference_step(st.t_ms, st.multiplier);
        if (!ok)
            return ok.error();
    }

    SimResult out;
    const LinearLatencyModel model = s.model.value_or(s.base);
    const ControllerConfig cfg = s.controller.value_or(ControllerConfig::defaults_for(*s.profile, model));
    if (auto ok = cfg.validate(); !ok)
        return ok.error();

    // Cameras are ordered by id so ties in virtual time resolve by camera_id.
    std::vector<SimCamera> cams(static_cast<std::size_t>(s.cameras));
    for (int i = 0; i < s.cameras; ++i) {
        auto& c = cams[static_cast<std::size_t>(i)];
        c.id = fmt::format("cam{:03d}", i);
        c.ctl = std::make_unique<LatencyController>(cfg, s.profile, model);
        c.ctl->set_log_sink([&out, id = c.id](const std::string& line) { out.log.push_back(line + " camera=" + id); });
        c.ctl->set_target(*bound);
    }

    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    std::uint64_t seq = 0;
    const double interval = 1000.0 / s.fps;
    const double end_ms = s.duration_s * 1000.0;
    for (int cam = 0; cam < s.cameras; ++cam)
        for (std::int64_t i = 0; static_cast<double>(i) * interval < end_ms; ++i)
            events.emplace(static_cast<double>(i) * interval, cam, 0, seq++);

    while (!events.empty()) {
        Event ev = events.top();
        events.pop();
        SimCamera& cam = cams[static_cast<std::size_t>(ev.camera)];
        if (ev.kind == 0) {
            const KnobSetting setting = cam.ctl->current_setting();
            const double size = s.profile->profiled_size(setting);
            const double lat = channel.transmit(size, ev.t_ms);
            Event d(ev.t_ms + lat, ev.camera, 1, seq++);
            d.sent_ms = ev.t_ms;
            d.latency_ms = lat;
            d.size_bytes = size;
            d.epoch = cam.ctl->epoch();
            d.setting = setting;
            d.accuracy = accuracy_of(*s.profile, setting);
            events.push(d);
            continue;
        }
        out.records.push_back({ev.sent_ms, ev.t_ms, ev.size_bytes, cam.id, ev.setting, ev.accuracy});
        cam.recent.push_back(ev.latency_ms);
        while (cam.recent.size() > static_cast<std::size_t>(s.series_window))
            cam.recent.pop_front();
        if (s.controller_enabled) {
            cam.ctl->observe_latency(ev.latency_ms, ev.epoch);
            const auto step = cam.ctl->control_step(Timestamp{static_cast<std::int64_t>(std::llround(ev.t_ms * 1000))});
            if (step.kind == StepResult::Kind::infeasible)
                ++out.infeasible_steps;
            if (step.changed)
                ++out.knob_changes;
        }
        const std::vector<double> window(cam.recent.begin(), cam.recent.end());
        const KnobSetting now_setting = cam.ctl->current_setting();
        out.series.push_back(
            {ev.t_ms, percentile(window, 95).value(), now_setting, accuracy_of(*s.profile, now_setting), cam.id});
    }
    return out;
}

std::vector<double> windowed_p95(const std::vector<LatencyRecord>& records, double start_ms, double window_ms)
{
    std::map<std::int64_t, std::vector<double>> buckets;
    for (const auto& r : records) {
        if (r.ts_sent_ms < start_ms)
            continue;
        buckets[static_cast<std::int64_t>(std::floor((r.ts_sent_ms - start_ms) / window_ms))].push_back(
            r.latency_ms());
    }
    std::vector<double> out;
    out.reserve(buckets.size());
    for (const auto& [_, v] : buckets)
        out.push_back(percentile(v, 95).value());
    return out;
}

double window_pass_fraction(const std::vector<LatencyRecord>& records, double start_ms, double bound_ms,
                            double window_ms)
{
    const auto w = windowed_p95(records, start_ms, window_ms);
    if (w.empty())
        return 1.0;
    const auto ok = std::count_if(w.begin(), w.end(), [&](double p) { return p < bound_ms; });
    return static_cast<double>(ok) / static_cast<double>(w.size());
}

namespace {

using nlohmann::json;

LinearLatencyModel model_from(const json& j)
{
    return {j.at("slope").get<double>(), j.value("intercept", 0.0)};
}

Result<LinearLatencyModel> channel_base(const json& ch)
{
    if (ch.contains("points")) {
        std::vector<LatencyPoint> pts;
        for (const auto& p : ch.at("points"))
            pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        return fit_latency_model(pts);
    }
    return model_from(ch);
}

}  // namespace

Result<Scenario> parse_scenario(std::string_view text_in, const std::filesystem::path& base_dir)
{
    try {
        const json j = json::parse(text_in);
        Scenario s;
        const json& ch = j.at("channel");
        auto base = channel_base(ch);
        if (!base)
            return base.error();
        s.base = *base;
        s.jitter = ch.value("jitter", 0.05);
        s.seed = ch.value("seed", std::uint64_t{1});
        for (const auto& st : ch.value("schedule", json::array())) {
            if (st.is_array())
                s.schedule.push_back({st.at(0).get<double>(), st.at(1).get<double>()});
            else
                s.schedule.push_back({st.at("t_ms").get<double>(), st.at("multiplier").get<double>()});
        }

        const json& prof = j.at("profile");
        Result<ProfileTable> table = make_error(Errc::empty_profile);
        if (prof.is_string()) {
            std::filesystem::path p = prof.get<std::string>();
            if (p.is_relative() && !base_dir.empty())
                p = base_dir / p;
            table = load_profile(p);
        } else {
            const json& syn = prof.at("synthetic");
            SyntheticProfileOptions o;
            o.native_size_bytes = syn.value("native_size_bytes", o.native_size_bytes);
            o.seed = syn.value("seed", o.seed);
            o.min_accuracy_pct = syn.value("min_accuracy_pct", o.min_accuracy_pct);
            if (syn.contains("count"))
                o.count = syn.at("count").get<std::size_t>();
            table = ProfileTable::build(synthesize_profile(o));
        }
        if (!table)
            return table.error();
        s.profile = std::make_shared<const ProfileTable>(std::move(table).value());

        if (j.contains("latency_model"))
            s.model = model_from(j.at("latency_model"));
        const json& bound = j.at("bound");
        s.latency_max_ms = bound.at("latency_ms").get<double>();
        s.accuracy_min_pct = bound.at("accuracy_pct").get<double>();
        s.fps = j.value("fps", s.fps);
        s.duration_s = j.value("duration_s", s.duration_s);
        s.cameras = j.value("cameras", s.cameras);
        s.series_window = j.value("series_window", s.series_window);

        if (j.contains("controller")) {
            const json& c = j.at("controller");
            s.controller_enabled = c.value("enabled", true);
            ControllerConfig cfg = ControllerConfig::defaults_for(*s.profile, s.model.value_or(s.base));
            cfg.k1 = c.value("k1", cfg.k1);
            cfg.k2 = c.value("k2", cfg.k2);
            cfg.error_threshold_ms = c.value("error_threshold_ms", cfg.error_threshold_ms);
            cfg.integral_clamp_bytes = c.value("integral_clamp_bytes", cfg.integral_clamp_bytes);
            cfg.sample_window = c.value("sample_window", cfg.sample_window);
            cfg.normalize_error = c.value("normalize_error", cfg.normalize_error);
            if (c.contains("setpoint_margin_ms"))
                cfg.setpoint_margin_ms = c.at("setpoint_margin_ms").get<double>();
            s.controller = cfg;
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        return make_error(Errc::parse_error, std::string("scenario: ") + e.what());
    }
}

Result<Scenario> load_scenario(const std::filesystem::path& path)
{
    auto content = text::read_file(path);
    if (!content)
        return content.error();
    return parse_scenario(*content, path.parent_path());
}

Result<Scenario> preset_scenario(std::string_view name, int nodes, std::uint64_t seed)
{
    Scenario s;
    s.seed = seed;
    SyntheticProfileOptions prof;
    prof.seed = seed;
    const auto jaad = fit_latency_model(kJaadSingleNode).value();
    if (name == "jaad-step") {
        s.base = jaad;
        s.schedule = {{5000, 6.5}};
        s.latency_max_ms = 100;
        s.accuracy_min_pct = 96;
        s.duration_s = 30;
        prof.native_size_bytes = 970e3;
    } else if (name == "duke-10x") {
        s.base = {kDukeComplexSingleNode.second / kDukeComplexSingleNode.first, 0.0};
        s.schedule = {{5000, 8.4}, {15000, 10.0}};
        s.latency_max_ms = 100;
        s.accuracy_min_pct = 95.8;
        s.duration_s = 25;
        prof.native_size_bytes = kDukeComplexSingleNode.first;
    } else if (name.starts_with("jaad-nodes-")) {
        const std::string_view col = name.substr(11);
        // FIVE_Lat / ONE_Lat per column.
        double ratio = 0;
        if (col == "simple") {
            ratio = 4.6;
            prof.native_size_bytes = 610e3;
        } else if (col == "medium") {
            ratio = 4.6;
            prof.native_size_bytes = 760e3;
        } else if (col == "complex") {
            ratio = 5.6;
            prof.native_size_bytes = 970e3;
        } else {
            return make_error(Errc::invalid_argument, "unknown column " + std::string(col));
        }
        if (nodes < 1 || nodes > 5)
            return make_error(Errc::invalid_argument, "node count must be 1..5");
        s.base = jaad;
        s.schedule = {{0, 1.0 + (ratio - 1.0) * (nodes - 1) / 4.0}};
        s.latency_max_ms = 100;
        s.accuracy_min_pct = 96;
        s.duration_s = 20;
        s.cameras = nodes;
    } else {
        return make_error(Errc::invalid_argument, "unknown scenario preset " + std::string(name));
    }
    s.profile = std::make_shared<const ProfileTable>(ProfileTable::build(synthesize_profile(prof)).value());
    return s;
}

std::string series_csv(const SimResult& r, bool with_camera)
{
    std::string out = with_camera ? "t_virtual_ms,p95_ms,setting,accuracy_pct,camera\n"
                                  : "t_virtual_ms,p95_ms,setting,accuracy_pct\n";
    for (const auto& p : r.series) {
        out += fmt::format("{:.3f},{:.3f},{},{:.3f}", p.t_ms, p.p95_ms, p.setting.to_string(), p.accuracy_pct);
        if (with_camera)
            out += "," + p.camera_id;
        out += '\n';
    }
    return out;
}

}  // namespace mez
