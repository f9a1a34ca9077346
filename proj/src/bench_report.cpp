#include "mez/bench_report.hpp"

#include <spdlog/fmt/fmt.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "mez/cam_broker.hpp"
#include "mez/clients.hpp"
#include "mez/edge_broker.hpp"
#include "mez/netsim.hpp"
#include "mez/stats.hpp"
#include "mez/synth.hpp"
#include "mez/trace.hpp"

namespace mez {

namespace {

Status fill_percentiles(BenchReport& r)
{
    if (r.latencies_ms.empty())
        return make_error(Errc::empty_samples, "no frame was delivered");
    r.p50_ms = *percentile(r.latencies_ms, 50);
    r.p95_ms = *percentile(r.latencies_ms, 95);
    r.p99_ms = *percentile(r.latencies_ms, 99);
    return {};
}

Result<BenchReport> run_sim(const BenchOptions& o)
{
    auto sc = o.nodes == 1 ? preset_scenario("jaad-step", 1, o.seed) : preset_scenario("jaad-nodes-complex", o.nodes, o.seed);
    if (!sc)
        return sc.error();
    sc->duration_s = o.duration_s;
    sc->fps = o.fps;
    auto res = run_closed_loop(*sc);
    if (!res)
        return res.error();
    BenchReport r;
    for (const auto& rec : res->records)
        r.latencies_ms.push_back(rec.latency_ms());
    r.frames_sent = res->records.size();
    r.frames_delivered = res->records.size() * static_cast<std::uint64_t>(std::max(o.subscribers, 1));
    // The simulator models only the wireless hop.
    double sum = 0;
    for (double v : r.latencies_ms)
        sum += v;
    if (auto s = fill_percentiles(r); !s)
        return s.error();
    r.mean_ms.network = sum / static_cast<double>(r.latencies_ms.size());
    r.pct = breakdown_percent(r.mean_ms);
    return r;
}

class TracerScope {
public:
    explicit TracerScope(Tracer* t) : prev_(active_tracer()) { set_active_tracer(t); }
    ~TracerScope() { set_active_tracer(prev_); }

private:
    Tracer* prev_;
};

Result<BenchReport> run_loopback(const BenchOptions& o)
{
    Tracer tracer;
    TracerScope scope(&tracer);

    auto model = fit_latency_model(kJaadSingleNode);
    if (!model)
        return model.error();
    auto table = ProfileTable::build(synthesize_profile({.native_size_bytes = 970e3, .seed = o.seed, .min_accuracy_pct = 90.0, .count = std::nullopt}));
    if (!table)
        return table.error();
    auto profile = std::make_shared<const ProfileTable>(std::move(table).value());
    auto bound = QosBound::make(o.latency_ms, o.accuracy_pct);
    if (!bound)
        return bound.error();

    auto edge = EdgeBroker::start({});
    if (!edge)
        return edge.error();

    std::vector<std::unique_ptr<CamBroker>> cams;
    std::vector<std::unique_ptr<PublisherClient>> pubs;
    for (int i = 0; i < o.nodes; ++i) {
        CamBrokerConfig cc;
        cc.camera = CameraId(fmt::format("cam{:03d}", i));
        cc.edge = (*edge)->address();
        cc.width = o.width;
        cc.height = o.height;
        cc.fps = o.fps;
        cc.log.capacity_bytes = std::size_t{256} << 20;
        cc.profile = profile;
        cc.model = *model;
        if (o.emulate_link)
            cc.link = LinkEmulation{*model, 0.05, o.seed + static_cast<std::uint64_t>(i), 1.0};
        auto cam = CamBroker::start(std::move(cc));
        if (!cam)
            return cam.error();
        auto pub = PublisherClient::connect({"127.0.0.1", (*cam)->port()}, {}, std::chrono::milliseconds(1000));
        if (!pub)
            return pub.error();
        cams.push_back(std::move(cam).value());
        pubs.push_back(std::move(pub).value());
    }

    const Timestamp t_start = Timestamp::now();
    const Timestamp measured_from{t_start.micros + static_cast<std::int64_t>(o.warmup_s * 1e6)};

    std::mutex lat_mu;
    std::vector<double> latencies;
    std::atomic<std::uint64_t> delivered{0};
    std::vector<std::unique_ptr<SubscriberClient>> subs;
    for (int i = 0; i < o.subscribers; ++i) {
        SubscriberOptions so;
        so.edge = (*edge)->address();
        auto sc = SubscriberClient::connect(so);
        if (!sc)
            return sc.error();
        auto id = (*sc)->subscribe(fmt::format("cam{:03d}", i % o.nodes), t_start, Timestamp::max(), *bound);
        if (!id)
            return id.error();
        subs.push_back(std::move(sc).value());
    }
    std::vector<std::thread> readers;
    for (auto& sc : subs)
        readers.emplace_back([&, c = sc.get()] {
            for (;;) {
                auto ev = c->next();
                if (!ev || ev->kind == StreamEvent::Kind::end)
                    return;
                if (ev->kind != StreamEvent::Kind::frame)
                    continue;
                delivered.fetch_add(1);
                if (ev->frame->ts() < measured_from)
                    continue;
                const double ms = static_cast<double>(ev->received.micros - ev->frame->ts().micros) / 1000.0;
                std::lock_guard lk(lat_mu);
                latencies.push_back(ms);
            }
        });

    std::atomic<std::uint64_t> sent{0}, rejected{0};
    std::atomic<bool> pub_failed{false};
    std::vector<std::thread> publishers;
    const auto interval = std::chrono::microseconds(static_cast<std::int64_t>(1e6 / o.fps));
    const auto run_until = std::chrono::steady_clock::now() +
                           std::chrono::microseconds(static_cast<std::int64_t>(o.duration_s * 1e6));
    for (int i = 0; i < o.nodes; ++i)
        publishers.emplace_back([&, i] {
            const CameraId cam(fmt::format("cam{:03d}", i));
            SynthOptions so{.width = o.width, .height = o.height, .seed = o.seed + static_cast<std::uint64_t>(i)};
            // A short loop of frames keeps generation off the timed path.
            std::vector<Frame> pool;
            for (int k = 0; k < 16; ++k)
                pool.push_back(synth_frame(so, k, {0}, cam));
            auto next = std::chrono::steady_clock::now();
            for (std::int64_t k = 0; std::chrono::steady_clock::now() < run_until; ++k) {
                std::this_thread::sleep_until(next);
                next += interval;
                auto r = pubs[static_cast<std::size_t>(i)]->publish(
                    pool[static_cast<std::size_t>(k) % pool.size()].with_ts(Timestamp::now()));
                if (!r) {
                    pub_failed = true;
                    return;
                }
                if (*r == AppendOutcome::appended)
                    sent.fetch_add(1);
                else
                    rejected.fetch_add(1);
            }
        });
    for (auto& t : publishers)
        t.join();
    // Let the frames in flight land.
    std::this_thread::sleep_for(std::chrono::milliseconds(300) +
                                (o.emulate_link ? std::chrono::milliseconds(200) : std::chrono::milliseconds(0)));
    for (auto& sc : subs)
        sc->cancel();
    for (auto& t : readers)
        t.join();

    BenchReport r;
    std::uint64_t knob_drops = 0;
    for (auto& c : cams)
        knob_drops += c->stats().dropped_by_knobs;
    for (auto& c : cams)
        c->stop();
    (*edge)->stop();
    if (pub_failed)
        return make_error(Errc::broker_unavailable, "publish failed during the run");

    r.latencies_ms = std::move(latencies);
    r.frames_sent = sent.load();
    r.frames_dropped = knob_drops + rejected.load();
    r.frames_delivered = delivered.load();
    if (auto s = fill_percentiles(r); !s)
        return s.error();

    Breakdown sum;
    std::size_t n = 0;
    for (const auto& s : tracer.samples()) {
        sum.publish += s.publish;
        sum.controller += s.controller;
        sum.network += s.network;
        sum.broker += s.broker;
        sum.subscribe += s.subscribe;
        ++n;
    }
    if (n > 0) {
        const double d = static_cast<double>(n);
        r.mean_ms = {sum.publish / d, sum.controller / d, sum.network / d, sum.broker / d, sum.subscribe / d};
    }
    r.pct = breakdown_percent(r.mean_ms);
    return r;
}

}  // namespace

Breakdown breakdown_percent(const Breakdown& m)
{
    const double t = m.total();
    if (t <= 0)
        return {};
    return {100 * m.publish / t, 100 * m.controller / t, 100 * m.network / t, 100 * m.broker / t,
            100 * m.subscribe / t};
}

Result<BenchReport> run_bench(const BenchOptions& o)
{
    if (o.nodes < 1 || o.subscribers < 1 || o.duration_s <= 0 || o.fps <= 0)
        return make_error(Errc::invalid_argument, "nodes, subscribers, duration and fps must be positive");
    if (o.mode == BenchMode::sim)
        return run_sim(o);
    return run_loopback(o);
}

std::string format_report(const BenchOptions& o, const BenchReport& r)
{
    std::string s = fmt::format("mode={} nodes={} subscribers={} duration_s={} seed={}{}\n",
                                o.mode == BenchMode::sim ? "sim" : "loopback", o.nodes, o.subscribers, o.duration_s,
                                o.seed, o.emulate_link ? " link=emulated" : "");
    s += fmt::format("latency ms  p50={:.3f}  p95={:.3f}  p99={:.3f}\n", r.p50_ms, r.p95_ms, r.p99_ms);
    const auto row = [&](const char* name, double ms, double pct) {
        s += fmt::format("  {:<11}{:>10.3f} ms {:>7.2f} %\n", name, ms, pct);
    };
    row("publish", r.mean_ms.publish, r.pct.publish);
    row("controller", r.mean_ms.controller, r.pct.controller);
    row("network", r.mean_ms.network, r.pct.network);
    row("broker", r.mean_ms.broker, r.pct.broker);
    row("subscribe", r.mean_ms.subscribe, r.pct.subscribe);
    s += fmt::format("frames sent={} dropped={} delivered={}\n", r.frames_sent, r.frames_dropped, r.frames_delivered);
    return s;
}

std::string report_csv(const BenchReport& r)
{
    std::string s = "metric,value\n";
    const auto put = [&](std::string_view k, double v) { s += fmt::format("{},{}\n", k, v); };
    put("p50_ms", r.p50_ms);
    put("p95_ms", r.p95_ms);
    put("p99_ms", r.p99_ms);
    put("publish_ms", r.mean_ms.publish);
    put("controller_ms", r.mean_ms.controller);
    put("network_ms", r.mean_ms.network);
    put("broker_ms", r.mean_ms.broker);
    put("subscribe_ms", r.mean_ms.subscribe);
    put("publish_pct", r.pct.publish);
    put("controller_pct", r.pct.controller);
    put("network_pct", r.pct.network);
    put("broker_pct", r.pct.broker);
    put("subscribe_pct", r.pct.subscribe);
    put("frames_sent", static_cast<double>(r.frames_sent));
    put("frames_dropped", static_cast<double>(r.frames_dropped));
    put("frames_delivered", static_cast<double>(r.frames_delivered));
    return s;
}

}  // namespace mez
