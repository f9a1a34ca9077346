// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <string>
#include <thread>

#include "alg_oracle.hpp"
#include "log_oracle.hpp"
#include "mez/bench_report.hpp"
#include "mez/cam_broker.hpp"
#include "mez/clients.hpp"
#include "mez/edge_broker.hpp"
#include "mez/eval.hpp"
#include "mez/knobs.hpp"
#include "mez/netsim.hpp"
#include "mez/stats.hpp"
#include "support.hpp"

using namespace mez;
using namespace std::chrono_literals;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt1(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<double> latencies_from(const std::vector<LatencyRecord>& rs, double from_ms, const std::string& cam = {})
{
    std::vector<double> v;
    for (const auto& r : rs)
        if (r.ts_sent_ms >= from_ms && (cam.empty() || r.camera_id == cam))
            v.push_back(r.latency_ms());
    return v;
}

// 1 -------------------------------------------------------------------------
Outcome step_response()
{
    auto s = preset_scenario("jaad-step").value();
    const double native = s.profile->max_size();
    const double expect = s.base.predict(native) * 6.5;

    auto off = s;
    off.controller_enabled = false;
    const auto r_off = run_closed_loop(off).value();
    const double p95_off = percentile(latencies_from(r_off.records, 6000), 95).value();
    const bool off_ok = std::abs(p95_off - expect) / expect < 0.06;

    const auto r_on = run_closed_loop(s).value();
    // Settling allowance: one second of virtual time after the step.
    const double pass = window_pass_fraction(r_on.records, 6000, 100);
    double min_acc = 100;
    for (const auto& r : r_on.records)
        if (r.ts_sent_ms >= 6000)
            min_acc = std::min(min_acc, r.accuracy_pct);
    return {off_ok && pass >= 0.95 && min_acc >= 96,
            "off p95=" + fmt1("%.1f", p95_off) + " (base*6.5=" + fmt1("%.1f", expect) +
                ") on windows<100=" + fmt1("%.3f", pass) + " min_acc=" + fmt1("%.2f", min_acc)};
}

// 2 -------------------------------------------------------------------------
Outcome ten_x()
{
    const auto s = preset_scenario("duke-10x").value();
    bool qualifying = false;
    for (const auto& e : s.profile->entries())
        qualifying = qualifying || e.accuracy_pct >= s.accuracy_min_pct;
    const auto r = run_closed_loop(s).value();
    const double pass = window_pass_fraction(r.records, 6000, 100);
    double min_acc = 100;
    for (const auto& x : r.records)
        if (x.ts_sent_ms >= 6000)
            min_acc = std::min(min_acc, x.accuracy_pct);
    return {qualifying && pass >= 0.95 && min_acc >= 95.8 && r.infeasible_steps == 0,
            "windows<100=" + fmt1("%.3f", pass) + " min_acc=" + fmt1("%.2f", min_acc) +
                " infeasible=" + std::to_string(r.infeasible_steps)};
}

// 3 -------------------------------------------------------------------------
Outcome node_scaling()
{
    double worst = 0;
    std::string where;
    for (const char* preset : {"jaad-nodes-simple", "jaad-nodes-medium", "jaad-nodes-complex"})
        for (int n = 1; n <= 5; ++n) {
            const auto r = run_closed_loop(preset_scenario(preset, n).value()).value();
            for (int c = 0; c < n; ++c) {
                char id[16];
                std::snprintf(id, sizeof id, "cam%03d", c);
                // Skip the first two seconds while the sample window fills.
                const double p = percentile(latencies_from(r.records, 2000, id), 95).value();
                if (p > worst) {
                    worst = p;
                    where = std::string(preset) + " n=" + std::to_string(n) + " " + id;
                }
            }
        }
    return {worst < 100, "worst node p95=" + fmt1("%.1f", worst) + " ms at " + where};
}

// 4 -------------------------------------------------------------------------
Outcome subscriber_scaling()
{
    BenchOptions o;
    o.mode = BenchMode::loopback;
    o.nodes = 1;
    o.fps = 20;
    o.duration_s = 8;
    o.subscribers = 1;
    const auto one = run_bench(o);
    o.subscribers = 8;
    const auto eight = run_bench(o);
    if (!one || !eight)
        return {false, "bench failed: " + (one ? eight.error().to_string() : one.error().to_string())};
    return {eight->p95_ms < 2 * one->p95_ms,
            "p95 1 sub=" + fmt1("%.3f", one->p95_ms) + " ms, 8 subs=" + fmt1("%.3f", eight->p95_ms) + " ms"};
}

// 5 -------------------------------------------------------------------------
Outcome log_oracle()
{
    const auto t = testing::run_log_oracle(5, 10000);
    return {t.ops == 10000 && t.mismatches == 0 && t.stale_accepted == 0 && t.capacity_violations == 0 &&
                t.stale_attempts > 0 && t.evictions_seen > 0,
            "ops=" + std::to_string(t.ops) + " mismatches=" + std::to_string(t.mismatches) +
                " stale=" + std::to_string(t.stale_attempts) + "/accepted " + std::to_string(t.stale_accepted) +
                " over_capacity=" + std::to_string(t.capacity_violations) +
                " evictions=" + std::to_string(t.evictions_seen)};
}

// 6 -------------------------------------------------------------------------
Outcome concurrency()
{
    LogConfig c;
    c.capacity_bytes = 1 << 20;
    c.segment_count = 8;
    auto log = MemLog::create(c).value();
    std::atomic<bool> done{false};
    std::vector<std::vector<std::int64_t>> seen(8);
    std::vector<std::thread> readers;
    for (std::size_t r = 0; r < seen.size(); ++r)
        readers.emplace_back([&, r] {
            std::int64_t cursor = 0;
            while (!done) {
                if (!log->wait_newer({cursor}, 10ms))
                    continue;
                const auto got = log->get_range({cursor + 1}, Timestamp::max());
                if (!got)
                    continue;
                for (const auto& f : got->frames)
                    seen[r].push_back(f->ts().micros);
                if (!got->frames.empty())
                    cursor = got->frames.back()->ts().micros;
            }
        });
    const auto until = std::chrono::steady_clock::now() + 5s;
    std::int64_t ts = 0;
    while (std::chrono::steady_clock::now() < until)
        (void)log->append(testing::gray_frame(++ts, 16, 16, static_cast<std::uint8_t>(ts)));
    done = true;
    for (auto& t : readers)
        t.join();

    bool ok = true;
    std::size_t total = 0;
    for (const auto& s : seen) {
        total += s.size();
        for (std::size_t i = 1; i < s.size(); ++i)
            ok = ok && s[i] > s[i - 1];
        ok = ok && !s.empty();
    }
    return {ok, "appended=" + std::to_string(ts) + " observed=" + std::to_string(total) + " across 8 readers"};
}

// 7 -------------------------------------------------------------------------
std::vector<std::uint8_t> slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome crash_recovery()
{
    testing::TempDir dir;
    const std::string cam_id = "camR";
    const auto frame_at = [&](std::int64_t t) {
        return testing::gray_frame(t, 16, 16, static_cast<std::uint8_t>(t * 7), cam_id);
    };
    EdgeBrokerConfig ec;
    ec.persist_dir = dir.path();
    ec.segment_count = 8;
    ec.capacity_bytes = serialized_size(frame_at(0)) * 5 * 8;
    testing::LogOracle oracle(ec.capacity_bytes, ec.segment_count);

    auto edge = EdgeBroker::start(ec).value();
    ec.listen.port = edge->port();

    CamBrokerConfig cc;
    cc.camera = CameraId(cam_id);
    cc.edge = edge->address();
    cc.fps = 50;
    cc.backoff = 100ms;
    cc.register_retries = 20;
    auto cam = CamBroker::start(cc).value();

    SubscriberOptions so;
    so.edge = edge->address();
    so.retries = 20;
    so.backoff = 100ms;
    auto sub = SubscriberClient::connect(so).value();
    if (!sub->subscribe(cam_id, {1}, Timestamp::max(), QosBound::make(1000, 1).value()))
        return {false, "subscribe failed"};

    std::vector<std::int64_t> got;
    const auto receive_until = [&](std::int64_t last_ts, std::chrono::milliseconds limit) {
        const auto until = std::chrono::steady_clock::now() + limit;
        while ((got.empty() || got.back() < last_ts) && std::chrono::steady_clock::now() < until) {
            auto ev = sub->next(200ms);
            if (ev && ev->kind == StreamEvent::Kind::frame)
                got.push_back(ev->frame->ts().micros);
            else if (!ev && ev.code() != Errc::timeout)
                return;
        }
    };

    for (int t = 1; t <= 20; ++t) {
        auto f = std::make_shared<const Frame>(frame_at(t));
        oracle.append(f);
        (void)cam->publish(*f);
    }
    receive_until(20, 5000ms);
    edge->stop();
    edge.reset();

    std::vector<std::filesystem::path> segs;
    for (const auto& de : std::filesystem::directory_iterator(dir / cam_id))
        if (de.path().extension() == ".seg")
            segs.push_back(de.path());
    if (segs.size() < 3)
        return {false, "only " + std::to_string(segs.size()) + " segments persisted"};
    std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
        return std::stoll(a.stem().string().substr(5)) < std::stoll(b.stem().string().substr(5));
    });
    const auto victim = segs[1];
    auto bytes = slurp(victim);
    const auto lost = decode_segment_file(bytes).value().frames;
    bytes[bytes.size() / 2] ^= 0x04;
    {
        std::ofstream out(victim, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }

    edge = EdgeBroker::start(ec).value();
    const auto rep = edge->recovery().count(cam_id) ? edge->recovery().at(cam_id) : RecoveryReport{};
    const bool only_victim = rep.discarded == 1 && rep.loaded == static_cast<int>(segs.size()) - 1 &&
                             std::filesystem::exists(std::filesystem::path(victim).concat(".corrupt"));

    std::set<std::int64_t> gone;
    for (const auto& f : lost)
        gone.insert(f->ts().micros);
    std::vector<FramePtr> expect;
    for (const auto& f : oracle.all())
        if (!gone.count(f->ts().micros))
            expect.push_back(f);
    const MemLog* replica = edge->replica(cam_id);
    const bool survivors_match =
        replica && testing::same_frames(replica->get_range(Timestamp::min(), Timestamp::max()).value().frames, expect);

    // The camera re-registers, the subscriber reconnects and resumes.
    std::this_thread::sleep_for(300ms);
    for (int t = 21; t <= 30; ++t)
        (void)cam->publish(frame_at(t));
    receive_until(30, 8000ms);

    bool no_dupes = true;
    for (std::size_t i = 1; i < got.size(); ++i)
        no_dupes = no_dupes && got[i] > got[i - 1];
    const bool complete = got.size() == 30;

    return {only_victim && survivors_match && no_dupes && complete,
            "segments=" + std::to_string(segs.size()) + " loaded=" + std::to_string(rep.loaded) +
                " discarded=" + std::to_string(rep.discarded) + " survivors_match=" + (survivors_match ? "yes" : "no") +
                " received=" + std::to_string(got.size()) + "/30 reconnects=" + std::to_string(sub->reconnects()) +
                " duplicates=" + (no_dupes ? "0" : "yes")};
}

// 8 -------------------------------------------------------------------------
Outcome fidelity()
{
    const auto t = testing::check_fidelity(8, 100, true);
    return {t.states == 100 && t.mismatches == 0 && t.settings > 0 && t.infeasible > 0,
            "states=" + std::to_string(t.states) + " mismatches=" + std::to_string(t.mismatches) +
                " (setting " + std::to_string(t.settings) + ", infeasible " + std::to_string(t.infeasible) +
                ", no_change " + std::to_string(t.no_change) + ")"};
}

// 9 -------------------------------------------------------------------------
Outcome eval_arithmetic()
{
    const double i = iou(BBox::make(0, 0, 2, 2).value(), BBox::make(1, 1, 3, 3).value());
    const double f = f1(MatchResult{4, 1, 4});
    Rng rng(9);
    int broken = 0;
    for (int n = 0; n < 1000; ++n) {
        std::vector<BBox> p(rng.below(7)), g(rng.below(7));
        for (auto* v : {&p, &g})
            for (auto& b : *v) {
                const double x = rng.uniform(0, 12), y = rng.uniform(0, 12);
                b = BBox::make(x, y, x + rng.uniform(1, 6), y + rng.uniform(1, 6)).value();
            }
        const auto m = match_detections(p, g, 0.5);
        broken += m.tp + m.fn != static_cast<int>(g.size()) || m.tp + m.fp != static_cast<int>(p.size()) ||
                  m.tp < 0 || m.tp > static_cast<int>(std::min(p.size(), g.size()));
    }
    return {std::abs(i - 1.0 / 7) <= 1e-12 && std::abs(f - 0.6153846) <= 1e-6 && broken == 0,
            "iou=" + fmt1("%.15f", i) + " f1=" + fmt1("%.7f", f) + " identity violations=" + std::to_string(broken)};
}

// 10 ------------------------------------------------------------------------
Outcome percentile_and_ols()
{
    std::vector<double> v;
    for (int k = 1; k <= 100; ++k)
        v.push_back(k);
    const double p = percentile(v, 95).value();
    std::vector<LatencyPoint> line;
    const double slope = 4.4e-5, icpt = 3.25;
    for (double x : {1.2e5, 3e5, 6.1e5, 7.6e5, 9.7e5, 1.74e6})
        line.push_back({x, icpt + slope * x});
    const auto m = fit_latency_model(line).value();
    const double es = std::abs(m.slope - slope) / slope, ei = std::abs(m.intercept - icpt) / icpt;
    return {p == 95 && es < 1e-9 && ei < 1e-9,
            "p95=" + fmt1("%g", p) + " slope rel err=" + fmt1("%.2e", es) + " intercept rel err=" + fmt1("%.2e", ei)};
}

// 11 ------------------------------------------------------------------------
double diff_oracle(const Frame& a, const Frame& b)
{
    double s = 0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i)
        s += std::abs(static_cast<double>(a.pixels()[i]) - b.pixels()[i]);
    return s / 255.0 / static_cast<double>(a.pixels().size());
}

Outcome knob_effects()
{
    int violations = 0, checks = 0;
    std::string first_bad;
    const auto size_of = [](const Frame& f, const KnobSetting& s) {
        FrameDiffState st;
        return encoded_size(*apply_setting(f, s, st).value());
    };
    for (const auto& f : testing::synthetic_corpus(4, 1920, 1080)) {
        const auto base = size_of(f, {});
        const auto note = [&](bool ok, const KnobSetting& s) {
            ++checks;
            if (!ok && violations++ == 0)
                first_bad = s.to_string();
        };
        for (auto r : kResolutions)
            if (r != Resolution::native) {
                const KnobSetting s{r, ColorKnob::none, BlurKnob::none, FrameDiffKnob::off};
                note(size_of(f, s) < base, s);
            }
        for (auto c : kColorKnobs)
            if (c != ColorKnob::none) {
                const KnobSetting s{Resolution::native, c, BlurKnob::none, FrameDiffKnob::off};
                note(size_of(f, s) <= base, s);
            }
        for (auto b : kBlurKnobs)
            if (b != BlurKnob::none) {
                const KnobSetting s{Resolution::native, ColorKnob::none, b, FrameDiffKnob::off};
                note(size_of(f, s) <= base, s);
            }
    }

    const auto probe = testing::synthetic_corpus(1, 320, 180)[0];
    const bool zero_diff = frame_diff(probe, probe).value() == 0.0;

    Rng rng(11);
    std::vector<Frame> stream;
    std::vector<std::uint8_t> px(16 * 16, 128);
    for (int i = 0; i < 100; ++i) {
        const int changes = static_cast<int>(rng.below(4)) * static_cast<int>(rng.below(120));
        for (int c = 0; c < changes; ++c)
            px[rng.below(px.size())] = static_cast<std::uint8_t>(rng.below(256));
        stream.push_back(Frame::make({i}, 16, 16, Colorspace::gray, px, CameraId("s")).value());
    }
    int replay_mismatch = 0, drops = 0;
    for (auto knob : kFrameDiffKnobs) {
        std::optional<Frame> prev;
        FrameDiffState st;
        for (const auto& f : stream) {
            const bool drop = knob != FrameDiffKnob::off && prev && diff_oracle(*prev, f) <= framediff_threshold(knob);
            if (!drop)
                prev = f;
            drops += drop;
            replay_mismatch += drop != (should_drop(st, f, knob) == DropDecision::drop);
        }
    }
    return {violations == 0 && zero_diff && replay_mismatch == 0 && drops > 0,
            "size checks=" + std::to_string(checks) + " violations=" + std::to_string(violations) +
                (first_bad.empty() ? "" : " (first: " + first_bad + ")") +
                " frame_diff(identical)=" + (zero_diff ? "0" : "nonzero") +
                " replay mismatches=" + std::to_string(replay_mismatch) + " drops=" + std::to_string(drops)};
}

}  // namespace

int main()
{
    spdlog::set_level(spdlog::level::off);
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"step response under 6.5x interference", step_response},
        {"10x latency tolerance", ten_x},
        {"node scaling 1-5", node_scaling},
        {"subscriber scaling 1 vs 8", subscriber_scaling},
        {"log oracle equivalence", log_oracle},
        {"1 writer + 8 readers stress", concurrency},
        {"crash recovery", crash_recovery},
        {"controller step fidelity", fidelity},
        {"eval arithmetic", eval_arithmetic},
        {"percentile and regression", percentile_and_ols},
        {"knob directional effects", knob_effects},
    };
    int failed = 0, n = 0;
    for (const auto& [name, run] : criteria) {
        ++n;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", n - failed, n);
    return failed == 0 ? 0 : 1;
}
