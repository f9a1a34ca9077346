// mez: edge server, camera node, subscriber, benchmark, simulator and profile builder.
//
// Exit codes: 0 ok, 1 error, 2 usage, 3 infeasible bound, 4 connectivity exhausted.

#include <CLI11.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <thread>

#include "mez/bench_report.hpp"
#include "mez/cam_broker.hpp"
#include "mez/clients.hpp"
#include "mez/edge_broker.hpp"
#include "mez/image_io.hpp"
#include "mez/netsim.hpp"
#include "mez/profile_build.hpp"
#include "mez/synth.hpp"
#include "mez/text.hpp"

namespace {

using namespace mez;
using namespace std::chrono_literals;

enum Exit { kOk = 0, kError = 1, kUsage = 2, kInfeasible = 3, kUnreachable = 4 };

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int fail(const Error& e)
{
    std::fprintf(stderr, "error: %s\n", e.to_string().c_str());
    if (e.code == Errc::gave_up || e.code == Errc::broker_unavailable)
        return kUnreachable;
    return kError;
}

Result<net::Address> parse_addr(const std::string& s) { return net::Address::parse(s); }

// ---- edge

struct EdgeArgs {
    std::string listen = "127.0.0.1:7300";
    std::string persist_dir;
    std::size_t capacity_mb = 256;
    int segments = 16;
    std::string credentials;
};

int cmd_edge(const EdgeArgs& a)
{
    auto addr = parse_addr(a.listen);
    if (!addr)
        return fail(addr.error());
    EdgeBrokerConfig cfg;
    cfg.listen = *addr;
    if (!a.persist_dir.empty())
        cfg.persist_dir = a.persist_dir;
    cfg.capacity_bytes = a.capacity_mb << 20;
    cfg.segment_count = a.segments;
    cfg.credentials = a.credentials;
    auto edge = EdgeBroker::start(cfg);
    if (!edge)
        return fail(edge.error());
    for (const auto& [cam, r] : (*edge)->recovery())
        std::printf("recovered %s: loaded=%d discarded=%d overlapping=%d excess=%d\n", cam.c_str(), r.loaded,
                    r.discarded, r.overlapping, r.excess);
    std::printf("edge listening on %s:%u, %zu camera(s)\n", addr->host.c_str(), (*edge)->port(),
                (*edge)->cameras().size());
    std::fflush(stdout);
    while (!g_stop)
        std::this_thread::sleep_for(100ms);
    (*edge)->stop();
    return kOk;
}

// ---- camnode

struct CamArgs {
    std::string edge;
    std::string camera;
    std::string profile;
    std::string calib;
    double fps = 5;
    std::string source;
    double duration_s = 0;
    int width = 640;
    int height = 360;
    std::string listen = "127.0.0.1:0";
    int retries = 3;
    int backoff_ms = 200;
    std::string credentials;
    std::size_t capacity_mb = 256;
    int segments = 16;
    bool emulate_link = false;
    std::uint64_t seed = 1;
};

int cmd_camnode(const CamArgs& a)
{
    auto edge = parse_addr(a.edge);
    if (!edge)
        return fail(edge.error());
    auto listen = parse_addr(a.listen);
    if (!listen)
        return fail(listen.error());

    CamBrokerConfig cfg;
    cfg.camera = CameraId(a.camera);
    cfg.edge = *edge;
    cfg.listen = *listen;
    cfg.credentials = a.credentials;
    cfg.fps = a.fps;
    cfg.width = a.width;
    cfg.height = a.height;
    cfg.register_retries = a.retries;
    cfg.backoff = std::chrono::milliseconds(a.backoff_ms);
    cfg.log.capacity_bytes = a.capacity_mb << 20;
    cfg.log.segment_count = a.segments;

    std::vector<LatencyPoint> points(std::begin(kJaadSingleNode), std::end(kJaadSingleNode));
    if (!a.calib.empty()) {
        auto p = load_latency_calibration(a.calib);
        if (!p)
            return fail(p.error());
        points = *p;
    }
    auto model = fit_latency_model(points);
    if (!model)
        return fail(model.error());
    if (!a.profile.empty()) {
        auto t = load_profile(a.profile);
        if (!t)
            return fail(t.error());
        cfg.profile = std::make_shared<const ProfileTable>(std::move(t).value());
        cfg.model = *model;
    }
    if (a.emulate_link)
        cfg.link = LinkEmulation{*model, 0.05, a.seed, 1.0};

    std::vector<std::filesystem::path> images;
    if (!a.source.empty()) {
        if (!std::filesystem::is_directory(a.source))
            return fail(make_error(Errc::not_found, a.source + " is not a directory"));
        images = list_images(a.source);
        if (images.empty())
            return fail(make_error(Errc::not_found, "no images in " + a.source));
    }

    auto cam = CamBroker::start(cfg);
    if (!cam)
        return fail(cam.error());
    std::printf("camera %s registered, publishers may connect on port %u\n", a.camera.c_str(), (*cam)->port());
    std::fflush(stdout);

    SynthOptions synth;
    synth.width = a.width;
    synth.height = a.height;
    synth.seed = a.seed;
    const auto interval = std::chrono::microseconds(static_cast<std::int64_t>(1e6 / a.fps));
    const auto until = a.duration_s > 0 ? std::chrono::steady_clock::now() +
                                              std::chrono::microseconds(static_cast<std::int64_t>(a.duration_s * 1e6))
                                        : std::chrono::steady_clock::time_point::max();
    auto next = std::chrono::steady_clock::now();
    std::uint64_t published = 0;
    int code = kOk;
    for (std::int64_t k = 0; !g_stop && std::chrono::steady_clock::now() < until; ++k) {
        if ((*cam)->gave_up()) {
            std::fprintf(stderr, "error: edge unreachable after %d retries\n", a.retries);
            code = kUnreachable;
            break;
        }
        if (!images.empty() && static_cast<std::size_t>(k) >= images.size())
            break;
        std::this_thread::sleep_until(next);
        next += interval;
        const Timestamp now = Timestamp::now();
        Result<Frame> f = images.empty() ? Result<Frame>(synth_frame(synth, k, now, cfg.camera))
                                         : read_pnm(images[static_cast<std::size_t>(k)], now, cfg.camera);
        if (!f)
            return fail(f.error());
        auto r = (*cam)->publish(std::move(f).value());
        if (!r)
            return fail(r.error());
        if (*r == AppendOutcome::appended)
            ++published;
    }
    if (code == kOk)
        std::this_thread::sleep_for(200ms);
    const auto st = (*cam)->stats();
    (*cam)->stop();
    std::printf("published=%llu sent_upstream=%llu dropped_by_knobs=%llu\n",
                static_cast<unsigned long long>(published), static_cast<unsigned long long>(st.sent_upstream),
                static_cast<unsigned long long>(st.dropped_by_knobs));
    return code;
}

// ---- subscribe

struct SubArgs {
    std::string edge;
    std::string camera;
    double latency_ms = 100;
    double accuracy_min = 95;
    std::optional<std::int64_t> begin;
    std::optional<std::int64_t> end;
    std::string out_dir;
    std::string latency_csv;
    int retries = 3;
    int backoff_ms = 200;
    std::uint64_t max_frames = 0;
    std::string credentials;
    bool list = false;
};

int cmd_subscribe(const SubArgs& a)
{
    auto edge = parse_addr(a.edge);
    if (!edge)
        return fail(edge.error());
    SubscriberOptions so;
    so.edge = *edge;
    so.credentials = a.credentials;
    so.retries = a.retries;
    so.backoff = std::chrono::milliseconds(a.backoff_ms);
    auto client = SubscriberClient::connect(so);
    if (!client)
        return fail(client.error());
    auto& c = **client;

    if (a.list) {
        auto cams = c.camera_info();
        if (!cams)
            return fail(cams.error());
        for (const auto& i : *cams)
            std::printf("%s\t%ux%u\t%g fps\t%s\n", i.camera.c_str(), i.width, i.height, i.fps, i.endpoint.c_str());
        return kOk;
    }
    if (a.camera.empty()) {
        std::fprintf(stderr, "error: --camera-id is required\n");
        return kUsage;
    }
    auto bound = QosBound::make(a.latency_ms, a.accuracy_min);
    if (!bound)
        return fail(bound.error());
    if (!a.out_dir.empty())
        std::filesystem::create_directories(a.out_dir);
    std::ofstream csv;
    if (!a.latency_csv.empty()) {
        csv.open(a.latency_csv, std::ios::trunc);
        if (!csv)
            return fail(make_error(Errc::io_error, "cannot write " + a.latency_csv));
        csv << "ts_us,received_us,latency_ms,width,height,colorspace\n";
    }

    const Timestamp begin{a.begin.value_or(Timestamp::now().micros)};
    const Timestamp end = a.end ? Timestamp{*a.end} : Timestamp::max();
    auto sub = c.subscribe(a.camera, begin, end, *bound);
    if (!sub)
        return fail(sub.error());

    std::uint64_t n = 0;
    int code = kOk;
    while (!g_stop) {
        auto ev = c.next(200ms);
        if (!ev) {
            if (ev.code() == Errc::timeout)
                continue;
            return fail(ev.error());
        }
        if (ev->kind == StreamEvent::Kind::end)
            break;
        if (ev->kind == StreamEvent::Kind::infeasible) {
            std::fprintf(stderr, "infeasible bound: best achievable accuracy %.3f%% under %.1f ms\n",
                         ev->best_accuracy, a.latency_ms);
            code = kInfeasible;
            break;
        }
        const Frame& f = *ev->frame;
        if (!a.out_dir.empty()) {
            const char* ext = f.colorspace() == Colorspace::gray ? "pgm" : "ppm";
            if (auto s = write_pnm(f, std::filesystem::path(a.out_dir) / fmt::format("{}.{}", f.ts().micros, ext)); !s)
                return fail(s.error());
        }
        if (csv)
            csv << f.ts().micros << ',' << ev->received.micros << ','
                << text::fmt_double(static_cast<double>(ev->received.micros - f.ts().micros) / 1000.0) << ','
                << f.width() << ',' << f.height() << ',' << colorspace_name(f.colorspace()) << '\n';
        if (++n == a.max_frames)
            break;
    }
    (void)c.unsubscribe();
    std::fprintf(stderr, "received %llu frame(s)\n", static_cast<unsigned long long>(n));
    return code;
}

// ---- bench

int cmd_bench(const BenchOptions& o, const std::string& out)
{
    auto r = run_bench(o);
    if (!r)
        return fail(r.error());
    std::fputs(format_report(o, *r).c_str(), stdout);
    if (!out.empty())
        if (auto s = text::write_file(out, report_csv(*r)); !s)
            return fail(s.error());
    return kOk;
}

// ---- sim

struct SimArgs {
    std::string preset;
    std::string scenario;
    int nodes = 1;
    std::uint64_t seed = 1;
    double duration_s = 0;
    bool no_controller = false;
    std::string out;
};

int cmd_sim(const SimArgs& a)
{
    if (a.preset.empty() == a.scenario.empty()) {
        std::fprintf(stderr, "error: give exactly one of --preset or --scenario\n");
        return kUsage;
    }
    auto sc = a.preset.empty() ? load_scenario(a.scenario) : preset_scenario(a.preset, a.nodes, a.seed);
    if (!sc)
        return fail(sc.error());
    if (a.duration_s > 0)
        sc->duration_s = a.duration_s;
    if (a.no_controller)
        sc->controller_enabled = false;
    auto r = run_closed_loop(*sc);
    if (!r)
        return fail(r.error());
    for (const auto& line : r->log)
        std::puts(line.c_str());

    std::vector<double> lat;
    for (const auto& rec : r->records)
        lat.push_back(rec.latency_ms());
    const double settle_from = sc->schedule.empty() ? 1000.0 : sc->schedule.front().t_ms + 1000.0;
    std::printf("frames=%zu cameras=%d knob_changes=%llu infeasible_steps=%llu\n", r->records.size(), sc->cameras,
                static_cast<unsigned long long>(r->knob_changes), static_cast<unsigned long long>(r->infeasible_steps));
    if (!lat.empty())
        std::printf("p50=%.3f p95=%.3f p99=%.3f ms; windows under %.0f ms after t=%.0f ms: %.1f%%\n",
                    *percentile(lat, 50), *percentile(lat, 95), *percentile(lat, 99), sc->latency_max_ms,
                    settle_from, 100 * window_pass_fraction(r->records, settle_from, sc->latency_max_ms));
    if (!a.out.empty())
        if (auto s = text::write_file(a.out, series_csv(*r, sc->cameras > 1)); !s)
            return fail(s.error());
    return r->infeasible_steps > 0 ? kInfeasible : kOk;
}

// ---- profile-build

struct ProfileArgs {
    bool synthetic = false;
    std::optional<std::size_t> count;
    double native_size = 970e3;
    std::uint64_t seed = 7;
    double min_accuracy = 90;
    std::string corpus;
    std::string ground_truth;
    std::vector<std::string> preds;
    double iou = 0.5;
    std::string out;
    bool append = false;
};

int cmd_profile_build(const ProfileArgs& a)
{
    std::vector<ProfileEntry> entries;
    if (a.synthetic) {
        entries = synthesize_profile({.native_size_bytes = a.native_size,
                                      .seed = a.seed,
                                      .min_accuracy_pct = a.min_accuracy,
                                      .count = a.count});
    } else {
        if (a.corpus.empty() || a.ground_truth.empty() || a.preds.empty()) {
            std::fprintf(stderr, "error: corpus mode needs --corpus, --ground-truth and --pred (or use --synthetic)\n");
            return kUsage;
        }
        CorpusInput in;
        in.iou_threshold = a.iou;
        auto frames = load_corpus(a.corpus, CameraId("corpus"));
        if (!frames)
            return fail(frames.error());
        in.frames = std::move(frames).value();
        auto gt = load_detections(a.ground_truth);
        if (!gt)
            return fail(gt.error());
        in.ground_truth = std::move(gt).value();
        for (const auto& p : a.preds) {
            const auto eq = p.rfind('=');
            if (eq == std::string::npos) {
                std::fprintf(stderr, "error: --pred expects SETTING=FILE, got %s\n", p.c_str());
                return kUsage;
            }
            auto s = KnobSetting::parse(p.substr(0, eq));
            if (!s)
                return fail(s.error());
            auto d = load_detections(p.substr(eq + 1));
            if (!d)
                return fail(d.error());
            in.predictions[*s] = std::move(d).value();
        }
        auto built = build_profile_entries(in);
        if (!built)
            return fail(built.error());
        entries = std::move(built).value();
    }
    if (a.append && std::filesystem::exists(a.out)) {
        auto old = load_profile(a.out);
        if (!old)
            return fail(old.error());
        for (const auto& e : old->entries())
            if (std::none_of(entries.begin(), entries.end(), [&](const auto& n) { return n.setting == e.setting; }))
                entries.push_back(e);
    }
    auto table = ProfileTable::build(std::move(entries));
    if (!table)
        return fail(table.error());
    if (auto s = save_profile(*table, a.out); !s)
        return fail(s.error());
    std::printf("wrote %zu entries (%zu on the frontier) to %s\n", table->entries().size(), table->frontier().size(),
                a.out.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"mez: latency-controlled video pub-sub for edge cameras"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    EdgeArgs ea;
    auto* edge = app.add_subcommand("edge", "run the edge server");
    edge->add_option("--listen", ea.listen, "host:port")->capture_default_str();
    edge->add_option("--persist-dir", ea.persist_dir, "replica segment directory");
    edge->add_option("--capacity-mb", ea.capacity_mb, "replica log size per camera")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    edge->add_option("--segments", ea.segments, "segments per replica log")
        ->check(CLI::Range(2, 1 << 16))
        ->capture_default_str();
    edge->add_option("--credentials", ea.credentials, "shared secret required at Connect");

    CamArgs ca;
    auto* cam = app.add_subcommand("camnode", "run a camera node: broker, controller and frame source");
    cam->add_option("--edge", ca.edge, "edge host:port")->required();
    cam->add_option("--camera-id", ca.camera)->required();
    cam->add_option("--profile", ca.profile, "profile file; frames go out unmodified without one");
    cam->add_option("--latency-calib", ca.calib, "size/latency points; built-in single-node points otherwise");
    cam->add_option("--fps", ca.fps)->check(CLI::PositiveNumber)->capture_default_str();
    cam->add_option("--source", ca.source, "directory of PPM/PGM frames; synthetic when omitted");
    cam->add_option("--duration-s", ca.duration_s, "0 runs until interrupted or the source is exhausted");
    cam->add_option("--width", ca.width)->check(CLI::Range(1, 65535))->capture_default_str();
    cam->add_option("--height", ca.height)->check(CLI::Range(1, 65535))->capture_default_str();
    cam->add_option("--listen", ca.listen, "publisher endpoint")->capture_default_str();
    cam->add_option("--retries", ca.retries)->check(CLI::NonNegativeNumber)->capture_default_str();
    cam->add_option("--backoff-ms", ca.backoff_ms)->check(CLI::NonNegativeNumber)->capture_default_str();
    cam->add_option("--credentials", ca.credentials);
    cam->add_option("--capacity-mb", ca.capacity_mb)->check(CLI::PositiveNumber)->capture_default_str();
    cam->add_option("--segments", ca.segments)->check(CLI::Range(2, 1 << 16))->capture_default_str();
    cam->add_flag("--emulate-link", ca.emulate_link, "delay upstream frames by the calibrated channel");
    cam->add_option("--seed", ca.seed)->capture_default_str();

    SubArgs sa;
    auto* sub = app.add_subcommand("subscribe", "subscribe to a camera stream");
    sub->add_option("--edge", sa.edge, "edge host:port")->required();
    sub->add_option("--camera-id", sa.camera);
    sub->add_option("--latency-ms", sa.latency_ms)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--accuracy-min", sa.accuracy_min)->check(CLI::Range(0.0, 100.0))->capture_default_str();
    sub->add_option("--begin", sa.begin, "first timestamp, microseconds since the epoch (default: now)");
    sub->add_option("--end", sa.end, "last timestamp (default: open-ended)");
    sub->add_option("--out-dir", sa.out_dir, "write received frames here");
    sub->add_option("--latency-csv", sa.latency_csv, "per-frame latency log");
    sub->add_option("--retries", sa.retries)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--backoff-ms", sa.backoff_ms)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--max-frames", sa.max_frames, "stop after this many frames");
    sub->add_option("--credentials", sa.credentials);
    sub->add_flag("--list", sa.list, "list registered cameras and exit");

    BenchOptions bo;
    std::string bench_out;
    std::string bench_mode = "sim";
    auto* bench = app.add_subcommand("bench", "measure pub-sub latency");
    bench->add_option("--nodes", bo.nodes)->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--subscribers", bo.subscribers)->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--duration-s", bo.duration_s)->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--seed", bo.seed)->capture_default_str();
    bench->add_option("--mode", bench_mode)->check(CLI::IsMember({"sim", "loopback"}))->capture_default_str();
    bench->add_option("--out", bench_out, "report CSV");
    bench->add_option("--fps", bo.fps)->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--latency-ms", bo.latency_ms)->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--accuracy-min", bo.accuracy_pct)->check(CLI::Range(0.0, 100.0))->capture_default_str();
    bench->add_flag("--emulate-link", bo.emulate_link, "loopback: delay upstream frames by the calibrated channel");

    SimArgs ma;
    auto* sim = app.add_subcommand("sim", "run the closed-loop channel simulation");
    sim->add_option("--preset", ma.preset, "jaad-step | duke-10x | jaad-nodes-{simple,medium,complex}");
    sim->add_option("--scenario", ma.scenario, "JSON scenario file");
    sim->add_option("--nodes", ma.nodes)->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--seed", ma.seed)->capture_default_str();
    sim->add_option("--duration-s", ma.duration_s, "override the scenario duration");
    sim->add_flag("--no-controller", ma.no_controller);
    sim->add_option("--out", ma.out, "series CSV");

    ProfileArgs pa;
    auto* prof = app.add_subcommand("profile-build", "build a knob profile");
    prof->add_flag("--synthetic", pa.synthetic, "fabricate a labelled-synthetic table");
    prof->add_option("--count", pa.count, "synthetic: number of settings (identity included)");
    prof->add_option("--native-size", pa.native_size, "synthetic: identity size in bytes")->capture_default_str();
    prof->add_option("--seed", pa.seed)->capture_default_str();
    prof->add_option("--min-accuracy", pa.min_accuracy, "synthetic: accuracy floor")->capture_default_str();
    prof->add_option("--corpus", pa.corpus, "directory of PPM/PGM frames");
    prof->add_option("--ground-truth", pa.ground_truth, "ground-truth boxes");
    prof->add_option("--pred", pa.preds, "SETTING=FILE detector boxes for one setting (repeatable)");
    prof->add_option("--iou", pa.iou, "match threshold")->capture_default_str();
    prof->add_option("--out", pa.out, "profile file")->required();
    prof->add_flag("--append", pa.append, "merge into an existing profile");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    spdlog::set_default_logger(spdlog::stderr_color_mt("mez"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGPIPE, SIG_IGN);

    try {
        if (*edge)
            return cmd_edge(ea);
        if (*cam)
            return cmd_camnode(ca);
        if (*sub)
            return cmd_subscribe(sa);
        if (*bench) {
            bo.mode = bench_mode == "loopback" ? BenchMode::loopback : BenchMode::sim;
            return cmd_bench(bo, bench_out);
        }
        if (*sim)
            return cmd_sim(ma);
        if (*prof)
            return cmd_profile_build(pa);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
