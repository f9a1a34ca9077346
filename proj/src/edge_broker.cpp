#include "mez/edge_broker.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

#include "mez/text.hpp"
#include "mez/trace.hpp"

namespace mez {

struct EdgeBroker::Session {
    explicit Session(net::Socket s) : conn(std::make_shared<wire::Connection>(std::move(s))) {}

    std::shared_ptr<wire::Connection> conn;
    std::atomic<bool> live{true};
    bool connected = false;
    wire::Role role = wire::Role::subscriber;
    std::uint64_t client = 0;
    std::mutex mu;
    std::map<std::uint64_t, std::shared_ptr<Sub>> subs;
    std::optional<std::string> camera;
};

struct EdgeBroker::Sub {
    std::uint64_t id = 0;
    std::string camera;
    std::shared_ptr<wire::Connection> conn;
    Timestamp begin;
    Timestamp end;
    double latency_ms = 0;
    double accuracy_pct = 0;
    // Guards delivery to this subscription: nothing is written once active is false.
    std::mutex mu;
    bool active = true;
    std::optional<Timestamp> cursor;
};

struct EdgeBroker::Camera {
    wire::CameraInfo info;
    std::unique_ptr<MemLog> replica;
    std::mutex mu;
    std::map<std::uint64_t, std::shared_ptr<Sub>> subs;
    std::shared_ptr<Session> owner;
    bool upstream_on = false;
    Timestamp upstream_begin;
    std::optional<std::pair<double, double>> target_sent;
    std::atomic<bool> dirty{false};
    std::jthread delivery;
};

namespace {

std::string dir_name(const std::string& camera)
{
    std::string out = camera;
    for (char& c : out)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            c = '_';
    return out;
}

Status reply_error(wire::Connection& c, std::uint64_t id, Errc code, const std::string& msg)
{
    return c.send(wire::MsgType::error, id, wire::encode(wire::ErrorBody{code, msg}));
}

Status reply_ack(wire::Connection& c, std::uint64_t id, std::uint64_t value, bool eos = false)
{
    return c.send(wire::MsgType::ack, id, wire::encode(wire::AckBody{value, eos}));
}

}  // namespace

EdgeBroker::EdgeBroker(EdgeBrokerConfig config) : config_(std::move(config)) {}

Result<std::unique_ptr<EdgeBroker>> EdgeBroker::start(EdgeBrokerConfig config)
{
    if (config.segment_count < 2)
        return make_error(Errc::invalid_argument, "segment count must be at least 2");
    std::unique_ptr<EdgeBroker> b(new EdgeBroker(std::move(config)));
    if (b->config_.persist_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*b->config_.persist_dir, ec);
        if (ec)
            return make_error(Errc::io_error, "create " + b->config_.persist_dir->string() + ": " + ec.message());
        if (auto s = b->load_registry(); !s)
            return s.error();
    }
    auto lis = net::listen_tcp(b->config_.listen);
    if (!lis)
        return lis.error();
    b->listener_ = std::move(lis->sock);
    b->port_ = lis->port;
    b->accept_thread_ = std::thread([p = b.get()] { p->accept_loop(); });
    return b;
}

EdgeBroker::~EdgeBroker() { stop(); }

Result<std::unique_ptr<MemLog>> EdgeBroker::open_replica(const std::string& camera, bool recover)
{
    LogConfig lc;
    lc.capacity_bytes = config_.capacity_bytes;
    lc.segment_count = config_.segment_count;
    lc.encrypt_at_rest = config_.encrypt_at_rest;
    lc.key = config_.key;
    if (!config_.persist_dir)
        return MemLog::create(lc);
    lc.persist_dir = *config_.persist_dir / dir_name(camera);
    if (!recover)
        return MemLog::create(lc);
    RecoveryReport report;
    auto log = MemLog::recover(lc, &report);
    if (log) {
        spdlog::info("edge: recovered {}: loaded={} discarded={} overlapping={} excess={}", camera, report.loaded,
                     report.discarded, report.overlapping, report.excess);
        recovery_[camera] = report;
    }
    return log;
}

Status EdgeBroker::load_registry()
{
    const auto path = *config_.persist_dir / "registry.tsv";
    if (!std::filesystem::exists(path))
        return {};
    auto text = text::read_file(path);
    if (!text)
        return text.error();
    int line_no = 0;
    for (const auto& line : text::split(*text, '\n')) {
        ++line_no;
        if (text::trim(line).empty())
            continue;
        const auto f = text::split(line, '\t');
        const auto w = f.size() == 5 ? text::to_int(f[1]) : std::nullopt;
        const auto h = f.size() == 5 ? text::to_int(f[2]) : std::nullopt;
        const auto fps = f.size() == 5 ? text::to_double(f[3]) : std::nullopt;
        if (!w || !h || !fps)
            return make_error(Errc::parse_error, "registry.tsv line " + std::to_string(line_no));
        auto cam = std::make_shared<Camera>();
        cam->info = {std::string(f[0]), static_cast<std::uint16_t>(*w), static_cast<std::uint16_t>(*h), *fps,
                     std::string(f[4])};
        auto log = open_replica(cam->info.camera, true);
        if (!log)
            return log.error();
        cam->replica = std::move(log).value();
        cameras_[cam->info.camera] = cam;
        start_delivery(cam);
    }
    return {};
}

void EdgeBroker::save_registry_locked() const
{
    if (!config_.persist_dir)
        return;
    std::string out;
    for (const auto& [id, cam] : cameras_)
        out += id + "\t" + std::to_string(cam->info.width) + "\t" + std::to_string(cam->info.height) + "\t" +
               text::fmt_double(cam->info.fps) + "\t" + cam->info.endpoint + "\n";
    const auto path = *config_.persist_dir / "registry.tsv";
    const auto tmp = path.string() + ".tmp";
    if (auto s = text::write_file(tmp, out); !s) {
        spdlog::error("edge: registry write failed: {}", s.error().to_string());
        return;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        spdlog::error("edge: registry rename failed: {}", ec.message());
}

std::shared_ptr<EdgeBroker::Camera> EdgeBroker::find_camera(const std::string& id) const
{
    std::shared_lock lk(reg_mu_);
    auto it = cameras_.find(id);
    return it == cameras_.end() ? nullptr : it->second;
}

std::vector<wire::CameraInfo> EdgeBroker::cameras() const
{
    std::shared_lock lk(reg_mu_);
    std::vector<wire::CameraInfo> out;
    for (const auto& [_, c] : cameras_)
        out.push_back(c->info);
    return out;
}

std::size_t EdgeBroker::subscription_count() const
{
    std::shared_lock lk(reg_mu_);
    std::size_t n = 0;
    for (const auto& [_, c] : cameras_) {
        std::lock_guard cl(c->mu);
        n += c->subs.size();
    }
    return n;
}

EdgeStats EdgeBroker::stats() const
{
    std::lock_guard lk(stats_mu_);
    return stats_;
}

const MemLog* EdgeBroker::replica(const std::string& camera) const
{
    auto c = find_camera(camera);
    return c ? c->replica.get() : nullptr;
}

void EdgeBroker::accept_loop()
{
    for (;;) {
        auto s = net::accept_tcp(listener_);
        if (!s || stopping_)
            return;
        auto session = std::make_shared<Session>(std::move(s).value());
        std::lock_guard lk(sessions_mu_);
        sessions_.push_back(session);
        session_threads_.emplace_back([this, session] { serve(session); });
    }
}

void EdgeBroker::serve(std::shared_ptr<Session> s)
{
    for (;;) {
        auto m = s->conn->receive();
        if (!m)
            break;
        if (!s->connected) {
            if (m->type != wire::MsgType::connect) {
                (void)reply_error(*s->conn, m->id, Errc::protocol_error, "connect first");
                continue;
            }
            auto c = wire::decode_connect(m->body);
            if (!c) {
                (void)reply_error(*s->conn, m->id, Errc::protocol_error, c.error().message);
                continue;
            }
            if (c->role != wire::Role::subscriber && c->role != wire::Role::camnode) {
                (void)reply_error(*s->conn, m->id, Errc::protocol_error, "publishers connect to a camera broker");
                continue;
            }
            if (!config_.credentials.empty() && c->credentials != config_.credentials) {
                (void)reply_error(*s->conn, m->id, Errc::auth_failed, "bad credentials");
                break;
            }
            s->connected = true;
            s->role = c->role;
            s->client = next_client_++;
            (void)s->conn->send(wire::MsgType::connect_ack, m->id, wire::encode_u64(s->client));
            continue;
        }
        if (s->role == wire::Role::camnode)
            handle_camnode(s, *m);
        else
            handle_subscriber(s, *m);
    }
    on_session_closed(s);
    s->conn->shutdown();
}

void EdgeBroker::handle_subscriber(const std::shared_ptr<Session>& s, wire::Message& m)
{
    switch (m.type) {
    case wire::MsgType::get_camera_info:
        (void)s->conn->send(wire::MsgType::camera_info_resp, m.id, wire::encode(cameras()));
        return;
    case wire::MsgType::subscribe:
        add_subscription(s, m);
        return;
    case wire::MsgType::unsubscribe:
        remove_subscription(s, m);
        return;
    default:
        (void)reply_error(*s->conn, m.id, Errc::protocol_error,
                          "unexpected message type " + std::to_string(static_cast<int>(m.type)));
    }
}

void EdgeBroker::add_subscription(const std::shared_ptr<Session>& s, const wire::Message& m)
{
    auto body = wire::decode_subscribe(m.body);
    if (!body) {
        (void)reply_error(*s->conn, m.id, Errc::protocol_error, body.error().message);
        return;
    }
    if (auto b = QosBound::make(body->latency_ms, body->accuracy_pct); !b) {
        (void)reply_error(*s->conn, m.id, b.code(), b.error().message);
        return;
    }
    if (body->begin > body->end) {
        (void)reply_error(*s->conn, m.id, Errc::invalid_range, "begin is after end");
        return;
    }
    auto cam = find_camera(body->camera);
    if (!cam) {
        (void)reply_error(*s->conn, m.id, Errc::unknown_camera, body->camera);
        return;
    }
    auto sub = std::make_shared<Sub>();
    sub->id = next_sub_++;
    sub->camera = body->camera;
    sub->conn = s->conn;
    sub->begin = body->begin;
    sub->end = body->end;
    sub->latency_ms = body->latency_ms;
    sub->accuracy_pct = body->accuracy_pct;
    {
        // The Ack must precede the first delivery for this id.
        std::lock_guard sl(sub->mu);
        {
            std::lock_guard lk(s->mu);
            s->subs[sub->id] = sub;
        }
        {
            std::lock_guard cl(cam->mu);
            cam->subs[sub->id] = sub;
        }
        (void)reply_ack(*s->conn, m.id, sub->id);
    }
    refresh_upstream(cam, false);
    cam->dirty = true;
}

void EdgeBroker::remove_subscription(const std::shared_ptr<Session>& s, const wire::Message& m)
{
    auto id = wire::decode_u64(m.body);
    if (!id) {
        (void)reply_error(*s->conn, m.id, Errc::protocol_error, id.error().message);
        return;
    }
    std::shared_ptr<Sub> sub;
    {
        std::lock_guard lk(s->mu);
        auto it = s->subs.find(*id);
        if (it != s->subs.end()) {
            sub = it->second;
            s->subs.erase(it);
        }
    }
    if (!sub) {
        (void)reply_error(*s->conn, m.id, Errc::unknown_subscription, std::to_string(*id));
        return;
    }
    {
        std::lock_guard sl(sub->mu);
        sub->active = false;
        (void)reply_ack(*s->conn, m.id, sub->id);
    }
    if (auto cam = find_camera(sub->camera))
        drop_subscription(cam, sub->id);
}

void EdgeBroker::drop_subscription(const std::shared_ptr<Camera>& cam, std::uint64_t id)
{
    {
        std::lock_guard cl(cam->mu);
        cam->subs.erase(id);
    }
    refresh_upstream(cam, false);
}

void EdgeBroker::refresh_upstream(const std::shared_ptr<Camera>& cam, bool force_subscribe)
{
    std::lock_guard cl(cam->mu);
    auto owner = cam->owner;
    if (!owner || !owner->live) {
        cam->upstream_on = false;
        return;
    }
    auto& up = *owner->conn;
    if (cam->subs.empty()) {
        if (cam->upstream_on)
            (void)up.send(wire::MsgType::unsubscribe, 0, wire::encode_u64(0));
        cam->upstream_on = false;
        return;
    }
    double latency = std::numeric_limits<double>::infinity();
    double accuracy = 0;
    Timestamp begin = Timestamp::max();
    for (const auto& [_, sub] : cam->subs) {
        latency = std::min(latency, sub->latency_ms);
        accuracy = std::max(accuracy, sub->accuracy_pct);
        begin = std::min(begin, sub->begin);
    }
    const std::pair<double, double> target{latency, accuracy};
    if (cam->target_sent != target || force_subscribe) {
        (void)up.send(wire::MsgType::set_target, 0, wire::encode(wire::TargetBody{latency, accuracy}));
        cam->target_sent = target;
    }
    if (auto last = cam->replica->last_ts(); last && last->micros + 1 > begin.micros)
        begin = {last->micros + 1};
    // A later subscriber may want frames from before the running transfer's start.
    if (!cam->upstream_on || force_subscribe || begin < cam->upstream_begin) {
        wire::SubscribeBody sb{cam->info.camera, begin, Timestamp::max(), latency, accuracy};
        (void)up.send(wire::MsgType::subscribe, 0, wire::encode(sb));
        cam->upstream_on = true;
        cam->upstream_begin = begin;
    }
}

void EdgeBroker::handle_camnode(const std::shared_ptr<Session>& s, wire::Message& m)
{
    switch (m.type) {
    case wire::MsgType::register_camera: {
        auto info = wire::decode_camera_info(m.body);
        if (!info) {
            (void)reply_error(*s->conn, m.id, Errc::protocol_error, info.error().message);
            return;
        }
        if (info->camera.empty()) {
            (void)reply_error(*s->conn, m.id, Errc::invalid_argument, "empty camera id");
            return;
        }
        std::shared_ptr<Camera> cam;
        bool fresh = false;
        {
            std::unique_lock lk(reg_mu_);
            auto it = cameras_.find(info->camera);
            if (it != cameras_.end()) {
                cam = it->second;
                std::lock_guard cl(cam->mu);
                if (cam->owner && cam->owner->live && cam->owner != s) {
                    lk.unlock();
                    (void)reply_error(*s->conn, m.id, Errc::duplicate_camera, info->camera);
                    return;
                }
                cam->owner = s;
                cam->upstream_on = false;
                cam->target_sent.reset();
                cam->info = *info;
            } else {
                auto log = open_replica(info->camera, config_.persist_dir.has_value());
                if (!log) {
                    lk.unlock();
                    (void)reply_error(*s->conn, m.id, log.code(), log.error().message);
                    return;
                }
                cam = std::make_shared<Camera>();
                cam->info = *info;
                cam->replica = std::move(log).value();
                cam->owner = s;
                cameras_[info->camera] = cam;
                fresh = true;
            }
            save_registry_locked();
        }
        {
            std::lock_guard sl(s->mu);
            s->camera = info->camera;
        }
        if (fresh)
            start_delivery(cam);
        (void)reply_ack(*s->conn, m.id, 0);
        refresh_upstream(cam, true);
        spdlog::info("edge: camera {} registered", info->camera);
        return;
    }
    case wire::MsgType::unregister_camera: {
        auto id = wire::decode_str(m.body);
        if (!id) {
            (void)reply_error(*s->conn, m.id, Errc::protocol_error, id.error().message);
            return;
        }
        std::shared_ptr<Camera> cam;
        {
            std::unique_lock lk(reg_mu_);
            auto it = cameras_.find(*id);
            if (it == cameras_.end()) {
                lk.unlock();
                (void)reply_error(*s->conn, m.id, Errc::unknown_camera, *id);
                return;
            }
            cam = it->second;
            cameras_.erase(it);
            save_registry_locked();
        }
        std::map<std::uint64_t, std::shared_ptr<Sub>> subs;
        {
            std::lock_guard cl(cam->mu);
            subs.swap(cam->subs);
            cam->owner.reset();
            cam->upstream_on = false;
        }
        cam->delivery.request_stop();
        cam->delivery.join();
        for (auto& [sid, sub] : subs) {
            std::lock_guard sl(sub->mu);
            if (sub->active)
                (void)reply_ack(*sub->conn, 0, sid, true);
            sub->active = false;
        }
        (void)reply_ack(*s->conn, m.id, 0);
        spdlog::info("edge: camera {} unregistered", *id);
        return;
    }
    case wire::MsgType::frame_delivery: {
        const Timestamp recv = Timestamp::now();
        auto d = wire::decode_delivery(m.body);
        std::optional<std::string> own;
        {
            std::lock_guard sl(s->mu);
            own = s->camera;
        }
        if (!d || !own || d->frame.camera().str() != *own) {
            (void)reply_error(*s->conn, m.id, Errc::protocol_error,
                              d ? "frame from an unregistered camera" : d.error().message);
            return;
        }
        auto cam = find_camera(*own);
        if (!cam)
            return;
        const Timestamp ts = d->frame.ts();
        auto r = cam->replica->append(std::move(d->frame));
        const bool ok = r && *r == AppendOutcome::appended;
        if (ok) {
            if (auto* t = active_tracer())
                t->mark(*own, ts, Tracer::Stage::edge_received, recv);
        }
        (void)s->conn->send(wire::MsgType::publish_ack, m.id, wire::encode(wire::PublishAckBody{ok, recv}));
        std::lock_guard lk(stats_mu_);
        ++stats_.upstream_frames;
        stats_.upstream_bytes += m.body.size();
        return;
    }
    case wire::MsgType::infeasible_notice: {
        auto n = wire::decode_infeasible(m.body);
        std::optional<std::string> own;
        {
            std::lock_guard sl(s->mu);
            own = s->camera;
        }
        auto cam = n && own ? find_camera(*own) : nullptr;
        if (!cam)
            return;
        std::vector<std::shared_ptr<Sub>> subs;
        {
            std::lock_guard cl(cam->mu);
            for (auto& [_, sub] : cam->subs)
                subs.push_back(sub);
        }
        for (auto& sub : subs) {
            std::lock_guard sl(sub->mu);
            if (!sub->active)
                continue;
            (void)sub->conn->send(wire::MsgType::infeasible_notice, 0,
                                  wire::encode(wire::InfeasibleBody{sub->id, n->best_accuracy}));
            std::lock_guard lk(stats_mu_);
            ++stats_.infeasible_forwarded;
        }
        return;
    }
    default:
        (void)reply_error(*s->conn, m.id, Errc::protocol_error,
                          "unexpected message type " + std::to_string(static_cast<int>(m.type)));
    }
}

void EdgeBroker::on_session_closed(const std::shared_ptr<Session>& s)
{
    s->live = false;
    std::map<std::uint64_t, std::shared_ptr<Sub>> subs;
    std::optional<std::string> camera;
    {
        std::lock_guard lk(s->mu);
        subs.swap(s->subs);
        camera = s->camera;
    }
    for (auto& [id, sub] : subs) {
        {
            std::lock_guard sl(sub->mu);
            sub->active = false;
        }
        if (auto cam = find_camera(sub->camera))
            drop_subscription(cam, id);
    }
    if (camera) {
        if (auto cam = find_camera(*camera)) {
            std::lock_guard cl(cam->mu);
            if (cam->owner == s) {
                cam->owner.reset();
                cam->upstream_on = false;
            }
        }
    }
}

void EdgeBroker::start_delivery(const std::shared_ptr<Camera>& cam)
{
    cam->delivery = std::jthread([this, cam](std::stop_token st) { delivery_loop(st, cam); });
}

void EdgeBroker::delivery_loop(std::stop_token st, std::shared_ptr<Camera> cam)
{
    std::optional<Timestamp> seen;
    while (!st.stop_requested()) {
        if (!cam->dirty.exchange(false)) {
            const Timestamp after = seen.value_or(Timestamp::min());
            if (!cam->replica->wait_newer(after, std::chrono::milliseconds(20)))
                continue;
        }
        std::vector<std::shared_ptr<Sub>> subs;
        {
            std::lock_guard cl(cam->mu);
            for (auto& [_, sub] : cam->subs)
                subs.push_back(sub);
        }
        seen = cam->replica->last_ts();
        if (subs.empty() || !seen)
            continue;

        Timestamp lo = Timestamp::max();
        for (auto& sub : subs) {
            std::lock_guard sl(sub->mu);
            Timestamp from = sub->begin;
            if (sub->cursor && sub->cursor->micros + 1 > from.micros)
                from = {sub->cursor->micros + 1};
            lo = std::min(lo, from);
        }
        auto range = lo <= *seen ? cam->replica->get_range(lo, *seen) : Result<RangeResult>(RangeResult{});
        if (!range)
            continue;

        std::vector<std::uint8_t> body;
        for (const auto& fp : range->frames) {
            if (st.stop_requested())
                return;
            body.clear();
            for (auto& sub : subs) {
                std::lock_guard sl(sub->mu);
                if (!sub->active || fp->ts() < sub->begin || fp->ts() > sub->end ||
                    (sub->cursor && fp->ts() <= *sub->cursor))
                    continue;
                if (body.empty())
                    serialize_frame_into(*fp, body);
                const auto id = wire::encode_u64(sub->id);
                const std::span<const std::uint8_t> parts[] = {id, body};
                if (auto* t = active_tracer())
                    t->mark_sent(cam->info.camera, fp->ts(), sub->id, Timestamp::now());
                if (!sub->conn->send_parts(wire::MsgType::frame_delivery, static_cast<std::uint64_t>(fp->ts().micros),
                                           parts)) {
                    sub->active = false;
                    continue;
                }
                sub->cursor = fp->ts();
                std::lock_guard lk(stats_mu_);
                ++stats_.delivered;
            }
        }

        // Every frame up to `seen` has been offered; finite windows at or below it are complete.
        for (auto& sub : subs) {
            bool done = false;
            {
                std::lock_guard sl(sub->mu);
                if (sub->active && sub->end <= *seen) {
                    (void)reply_ack(*sub->conn, 0, sub->id, true);
                    sub->active = false;
                    done = true;
                }
            }
            if (done)
                drop_subscription(cam, sub->id);
        }
    }
}

void EdgeBroker::stop()
{
    if (stopping_.exchange(true))
        return;
    listener_.shutdown();
    if (accept_thread_.joinable())
        accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lk(sessions_mu_);
        for (auto& s : sessions_)
            s->conn->shutdown();
        threads.swap(session_threads_);
    }
    for (auto& t : threads)
        t.join();
    std::map<std::string, std::shared_ptr<Camera>> cams;
    {
        std::unique_lock lk(reg_mu_);
        cams = cameras_;
    }
    for (auto& [_, c] : cams) {
        c->delivery.request_stop();
        if (c->delivery.joinable())
            c->delivery.join();
        c->replica->flush();
    }
    listener_.close();
}

}  // namespace mez
