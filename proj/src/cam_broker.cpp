#include "mez/cam_broker.hpp"

#include <spdlog/spdlog.h>

#include "mez/trace.hpp"

namespace mez {

namespace {

double ms_between(Timestamp a, Timestamp b) { return static_cast<double>(b.micros - a.micros) / 1000.0; }

Status reply_error(wire::Connection& c, std::uint64_t id, Errc code, const std::string& msg)
{
    return c.send(wire::MsgType::error, id, wire::encode(wire::ErrorBody{code, msg}));
}

}  // namespace

CamBroker::CamBroker(CamBrokerConfig config) : config_(std::move(config)) {}

Result<std::unique_ptr<CamBroker>> CamBroker::start(CamBrokerConfig config)
{
    if (config.fps <= 0)
        return make_error(Errc::invalid_argument, "fps must be positive");
    if (config.register_retries < 0)
        return make_error(Errc::invalid_argument, "retry count must be >= 0");
    std::unique_ptr<CamBroker> b(new CamBroker(std::move(config)));
    auto& cfg = b->config_;

    auto log = MemLog::create(cfg.log);
    if (!log)
        return log.error();
    b->log_ = std::move(log).value();

    if (cfg.profile) {
        if (!cfg.model)
            return make_error(Errc::invalid_argument, "controller needs a latency model");
        ControllerConfig cc = cfg.controller.value_or(ControllerConfig::defaults_for(*cfg.profile, *cfg.model));
        if (auto s = cc.validate(); !s)
            return s.error();
        b->controller_.emplace(cc, cfg.profile, *cfg.model);
        const std::string cam = cfg.camera.str();
        b->controller_->set_log_sink([cam](const std::string& line) { spdlog::info("{} {}", cam, line); });
    }

    if (cfg.link) {
        b->channel_.emplace(cfg.link->base, cfg.link->jitter, cfg.link->seed);
        if (cfg.link->multiplier != 1.0)
            if (auto s = b->channel_->set_interference_step(0, cfg.link->multiplier); !s)
                return s.error();
        b->link_epoch_ = std::chrono::steady_clock::now();
        b->link_thread_ = std::jthread([p = b.get()](std::stop_token st) { p->link_loop(st); });
    }

    auto lis = net::listen_tcp(cfg.listen);
    if (!lis)
        return lis.error();
    b->listener_ = std::move(lis->sock);
    b->port_ = lis->port;
    b->accept_thread_ = std::thread([p = b.get()] { p->accept_loop(); });

    if (cfg.edge) {
        if (auto s = b->register_with_edge(); !s) {
            b->stop();
            return s.error();
        }
        b->keeper_ = std::jthread([p = b.get()](std::stop_token st) { p->keeper_loop(st); });
    }
    return b;
}

CamBroker::~CamBroker() { stop(); }

Result<std::shared_ptr<wire::Connection>> CamBroker::dial_edge()
{
    auto sock = net::connect_tcp(*config_.edge, config_.rpc_timeout);
    if (!sock)
        return sock.error();
    auto conn = std::make_shared<wire::Connection>(std::move(sock).value());

    auto rpc = [&](wire::MsgType type, std::vector<std::uint8_t> body) -> Status {
        const std::uint64_t id = next_request_++;
        if (auto s = conn->send(type, id, body); !s)
            return s;
        auto m = conn->receive(config_.rpc_timeout);
        if (!m)
            return m.error();
        if (m->type == wire::MsgType::error)
            return wire::to_error(*m);
        if (m->id != id)
            return make_error(Errc::protocol_error, "reply id mismatch");
        return {};
    };

    if (auto s = rpc(wire::MsgType::connect, wire::encode(wire::ConnectBody{wire::Role::camnode, config_.credentials})); !s)
        return s.error();
    wire::CameraInfo info{config_.camera.str(), static_cast<std::uint16_t>(config_.width),
                          static_cast<std::uint16_t>(config_.height), config_.fps,
                          "127.0.0.1:" + std::to_string(port_)};
    if (auto s = rpc(wire::MsgType::register_camera, wire::encode(info)); !s)
        return s.error();
    return conn;
}

Status CamBroker::register_with_edge()
{
    Error last = make_error(Errc::broker_unavailable, "no attempt");
    for (int attempt = 0; attempt <= config_.register_retries; ++attempt) {
        if (stopping_)
            return make_error(Errc::gave_up, "stopping");
        if (attempt > 0)
            std::this_thread::sleep_for(config_.backoff);
        auto conn = dial_edge();
        if (conn) {
            std::lock_guard lk(edge_mu_);
            edge_ = std::move(conn).value();
            std::lock_guard sl(stats_mu_);
            ++stats_.registrations;
            return {};
        }
        last = conn.error();
        spdlog::warn("{}: register attempt {} failed: {}", config_.camera.str(), attempt + 1, last.to_string());
        // A duplicate means the edge has not yet noticed our previous session dying.
        if (last.code != Errc::broker_unavailable && last.code != Errc::timeout &&
            last.code != Errc::duplicate_camera)
            return last;
    }
    return make_error(Errc::gave_up, "registration failed after " + std::to_string(config_.register_retries + 1) +
                                         " attempts: " + last.message);
}

void CamBroker::keeper_loop(std::stop_token st)
{
    while (!st.stop_requested()) {
        std::shared_ptr<wire::Connection> conn;
        {
            std::lock_guard lk(edge_mu_);
            conn = edge_;
        }
        if (conn) {
            edge_reader(conn);
            stop_transfer();
            {
                std::lock_guard lk(edge_mu_);
                if (edge_ == conn)
                    edge_.reset();
            }
            edge_cv_.notify_all();
            continue;
        }
        if (stopping_)
            return;
        {
            std::unique_lock lk(edge_mu_);
            edge_cv_.wait_for(lk, st, config_.backoff, [] { return false; });
        }
        if (st.stop_requested() || stopping_)
            return;
        if (auto s = register_with_edge(); !s) {
            spdlog::error("{}: edge link lost: {}", config_.camera.str(), s.error().to_string());
            gave_up_ = true;
            return;
        }
    }
}

void CamBroker::edge_reader(std::shared_ptr<wire::Connection> conn)
{
    for (;;) {
        auto m = conn->receive();
        if (!m) {
            if (!stopping_)
                spdlog::warn("{}: edge connection closed: {}", config_.camera.str(), m.error().to_string());
            return;
        }
        if (frozen_)
            continue;
        switch (m->type) {
        case wire::MsgType::subscribe: {
            auto sub = wire::decode_subscribe(m->body);
            if (!sub) {
                spdlog::warn("{}: {}", config_.camera.str(), sub.error().to_string());
                break;
            }
            start_transfer(sub->begin);
            break;
        }
        case wire::MsgType::unsubscribe:
            stop_transfer();
            break;
        case wire::MsgType::set_target: {
            auto t = wire::decode_target(m->body);
            if (!t)
                break;
            auto bound = QosBound::make(t->latency_ms, t->accuracy_pct);
            if (!bound) {
                spdlog::warn("{}: bad target: {}", config_.camera.str(), bound.error().to_string());
                break;
            }
            std::optional<double> notice;
            {
                std::lock_guard lk(ctrl_mu_);
                if (controller_) {
                    controller_->set_target(*bound);
                    infeasible_ = false;
                    // No latency can fix a floor above everything the profile offers.
                    const double top = controller_->profile().size_index().rbegin()->second.accuracy_pct;
                    if (top < bound->accuracy_min_pct()) {
                        infeasible_ = true;
                        notice = top;
                    }
                }
            }
            if (notice) {
                (void)conn->send(wire::MsgType::infeasible_notice, 0, wire::encode(wire::InfeasibleBody{0, *notice}));
                std::lock_guard sl(stats_mu_);
                ++stats_.infeasible_notices;
            }
            break;
        }
        case wire::MsgType::publish_ack: {
            auto ack = wire::decode_publish_ack(m->body);
            if (ack)
                on_delivery_ack(m->id, *ack);
            break;
        }
        case wire::MsgType::ack: {
            std::lock_guard lk(edge_mu_);
            acked_ = m->id;
            edge_cv_.notify_all();
            break;
        }
        case wire::MsgType::error:
            spdlog::warn("{}: edge error: {}", config_.camera.str(), wire::to_error(*m).to_string());
            break;
        default:
            spdlog::warn("{}: unexpected message type {}", config_.camera.str(), static_cast<int>(m->type));
        }
    }
}

void CamBroker::accept_loop()
{
    for (;;) {
        auto s = net::accept_tcp(listener_);
        if (!s || stopping_)
            return;
        auto conn = std::make_shared<wire::Connection>(std::move(s).value());
        std::lock_guard lk(sessions_mu_);
        sessions_.push_back(conn);
        session_threads_.emplace_back([this, conn] { publisher_session(conn); });
    }
}

void CamBroker::publisher_session(std::shared_ptr<wire::Connection> conn)
{
    static std::atomic<std::uint64_t> next_client{1};
    bool connected = false;
    for (;;) {
        auto m = conn->receive();
        if (!m)
            return;
        if (frozen_)
            continue;
        if (m->type == wire::MsgType::connect) {
            auto c = wire::decode_connect(m->body);
            if (!c || c->role != wire::Role::publisher) {
                (void)reply_error(*conn, m->id, Errc::protocol_error, "expected a publisher connect");
                continue;
            }
            if (!config_.credentials.empty() && c->credentials != config_.credentials) {
                (void)reply_error(*conn, m->id, Errc::auth_failed, "bad credentials");
                conn->shutdown();
                return;
            }
            connected = true;
            (void)conn->send(wire::MsgType::connect_ack, m->id, wire::encode_u64(next_client++));
            continue;
        }
        if (!connected) {
            (void)reply_error(*conn, m->id, Errc::protocol_error, "connect first");
            continue;
        }
        if (m->type != wire::MsgType::publish) {
            (void)reply_error(*conn, m->id, Errc::protocol_error, "publishers may only publish");
            continue;
        }
        auto f = deserialize_frame(m->body);
        if (!f) {
            (void)reply_error(*conn, m->id, Errc::protocol_error, f.error().message);
            continue;
        }
        auto r = publish(std::move(f).value());
        if (!r) {
            (void)reply_error(*conn, m->id, r.code(), r.error().message);
            continue;
        }
        (void)conn->send(wire::MsgType::publish_ack, m->id,
                         wire::encode(wire::PublishAckBody{*r == AppendOutcome::appended, Timestamp::now()}));
    }
}

Result<AppendOutcome> CamBroker::publish(Frame f)
{
    if (f.camera() != config_.camera)
        return make_error(Errc::invalid_argument, "frame belongs to " + f.camera().str());
    const Timestamp ts = f.ts();
    const Timestamp at = Timestamp::now();
    Result<AppendOutcome> r = [&] {
        std::lock_guard lk(append_mu_);
        return log_->append(std::move(f));
    }();
    if (!r)
        return r;
    if (*r == AppendOutcome::appended) {
        if (auto* t = active_tracer())
            t->mark(config_.camera.str(), ts, Tracer::Stage::appended, at);
    }
    std::lock_guard lk(stats_mu_);
    if (*r == AppendOutcome::appended)
        ++stats_.published;
    else
        ++stats_.rejected_stale;
    return r;
}

void CamBroker::start_transfer(Timestamp begin)
{
    std::lock_guard lk(transfer_mu_);
    if (transfer_.joinable()) {
        transfer_.request_stop();
        transfer_.join();
    }
    transfer_ = std::jthread([this, begin](std::stop_token st) { transfer_loop(st, begin); });
}

void CamBroker::stop_transfer()
{
    std::lock_guard lk(transfer_mu_);
    if (transfer_.joinable()) {
        transfer_.request_stop();
        transfer_.join();
    }
    std::lock_guard fl(flight_mu_);
    in_flight_.clear();
}

bool CamBroker::transferring() const
{
    std::lock_guard lk(transfer_mu_);
    return transfer_.joinable();
}

void CamBroker::transfer_loop(std::stop_token st, Timestamp begin)
{
    FrameDiffState diff;
    Timestamp cursor = begin;
    std::uint64_t seq = 0;
    while (!st.stop_requested()) {
        if (frozen_) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            continue;
        }
        if (!log_->wait_newer({cursor.micros - 1}, std::chrono::milliseconds(50)))
            continue;
        auto range = log_->get_range(cursor, Timestamp::max());
        if (!range)
            continue;
        for (const auto& fp : range->frames) {
            if (st.stop_requested())
                return;
            cursor = {fp->ts().micros + 1};

            const auto t_start = std::chrono::steady_clock::now();
            Result<std::optional<Frame>> out = std::optional<Frame>(*fp);
            std::uint64_t epoch = 0;
            {
                std::lock_guard lk(ctrl_mu_);
                if (controller_) {
                    out = controller_->process_frame(*fp, diff);
                    epoch = controller_->epoch();
                }
            }
            const double took =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
            {
                std::lock_guard lk(ctrl_mu_);
                const double limit = config_.control_timeout ? static_cast<double>(config_.control_timeout->count())
                                     : pipeline_runs_ >= 5 ? 2.0 * pipeline_mean_ms_
                                                           : -1;
                if (limit > 0 && took > limit) {
                    std::lock_guard sl(stats_mu_);
                    ++stats_.control_overruns;
                }
                ++pipeline_runs_;
                pipeline_mean_ms_ += (took - pipeline_mean_ms_) / static_cast<double>(pipeline_runs_);
            }

            if (!out) {
                spdlog::warn("{}: knob pipeline failed at ts={}: {}; sending unmodified", config_.camera.str(),
                             fp->ts().micros, out.error().to_string());
                std::lock_guard sl(stats_mu_);
                ++stats_.knob_errors;
                out = std::optional<Frame>(*fp);
            }
            if (!out->has_value()) {
                std::lock_guard sl(stats_mu_);
                ++stats_.dropped_by_knobs;
                continue;
            }

            std::vector<std::uint8_t> body = wire::encode_u64(0);
            serialize_frame_into(**out, body);
            const Timestamp now = Timestamp::now();
            if (auto* t = active_tracer())
                t->mark(config_.camera.str(), fp->ts(), Tracer::Stage::processed, now);
            ++seq;
            {
                std::lock_guard fl(flight_mu_);
                in_flight_[seq] = {now, epoch};
            }
            if (auto s = send_upstream(fp->ts(), seq, std::move(body)); !s) {
                spdlog::warn("{}: upstream send failed: {}", config_.camera.str(), s.error().to_string());
                return;
            }
        }
    }
}

Status CamBroker::send_upstream(Timestamp frame_ts, std::uint64_t seq, std::vector<std::uint8_t> body)
{
    if (channel_) {
        double size = static_cast<double>(body.size());
        {
            std::lock_guard lk(ctrl_mu_);
            if (controller_)
                size = controller_->current_size();
        }
        std::lock_guard lk(link_mu_);
        const auto now = std::chrono::steady_clock::now();
        const double now_ms = std::chrono::duration<double, std::milli>(now - link_epoch_).count();
        const double delay = channel_->transmit(size, now_ms);
        auto due = now + std::chrono::microseconds(static_cast<std::int64_t>(delay * 1000.0));
        // The link is FIFO: a frame never overtakes the one ahead of it.
        due = std::max(due, link_last_due_);
        link_last_due_ = due;
        link_queue_.push_back({due, frame_ts, seq, std::move(body)});
        link_cv_.notify_all();
        return {};
    }
    std::shared_ptr<wire::Connection> conn;
    {
        std::lock_guard lk(edge_mu_);
        conn = edge_;
    }
    if (!conn)
        return make_error(Errc::broker_unavailable, "no edge connection");
    const std::size_t n = body.size();
    if (auto s = conn->send(wire::MsgType::frame_delivery, seq, body); !s)
        return s;
    std::lock_guard sl(stats_mu_);
    ++stats_.sent_upstream;
    stats_.upstream_bytes += n;
    return {};
}

void CamBroker::link_loop(std::stop_token st)
{
    std::unique_lock lk(link_mu_);
    while (!st.stop_requested()) {
        if (link_queue_.empty()) {
            link_cv_.wait(lk, st, [&] { return !link_queue_.empty(); });
            continue;
        }
        const auto due = link_queue_.front().due;
        if (std::chrono::steady_clock::now() < due) {
            link_cv_.wait_until(lk, st, due, [] { return false; });
            continue;
        }
        Pending p = std::move(link_queue_.front());
        link_queue_.pop_front();
        lk.unlock();
        std::shared_ptr<wire::Connection> conn;
        {
            std::lock_guard el(edge_mu_);
            conn = edge_;
        }
        if (conn && conn->send(wire::MsgType::frame_delivery, p.seq, p.body)) {
            std::lock_guard sl(stats_mu_);
            ++stats_.sent_upstream;
            stats_.upstream_bytes += p.body.size();
        }
        lk.lock();
    }
}

void CamBroker::on_delivery_ack(std::uint64_t seq, const wire::PublishAckBody& ack)
{
    InFlight f;
    {
        std::lock_guard fl(flight_mu_);
        auto it = in_flight_.find(seq);
        if (it == in_flight_.end())
            return;
        f = it->second;
        in_flight_.erase(it);
    }
    std::optional<double> notice;
    {
        std::lock_guard lk(ctrl_mu_);
        if (!controller_ || !controller_->target())
            return;
        controller_->observe_latency(ms_between(f.sent, ack.recv_ts), f.epoch);
        const StepResult r = controller_->control_step(Timestamp::now());
        if (r.kind == StepResult::Kind::infeasible) {
            if (!infeasible_)
                notice = r.best_accuracy;
            infeasible_ = true;
        } else if (r.kind == StepResult::Kind::setting) {
            infeasible_ = false;
        }
    }
    if (!notice)
        return;
    std::shared_ptr<wire::Connection> conn;
    {
        std::lock_guard lk(edge_mu_);
        conn = edge_;
    }
    if (conn) {
        (void)conn->send(wire::MsgType::infeasible_notice, 0, wire::encode(wire::InfeasibleBody{0, *notice}));
        std::lock_guard sl(stats_mu_);
        ++stats_.infeasible_notices;
    }
}

CamBrokerStats CamBroker::stats() const
{
    std::lock_guard lk(stats_mu_);
    return stats_;
}

std::optional<KnobSetting> CamBroker::current_setting() const
{
    std::lock_guard lk(ctrl_mu_);
    if (!controller_)
        return std::nullopt;
    return controller_->current_setting();
}

void CamBroker::freeze() { frozen_ = true; }

void CamBroker::stop()
{
    if (stopping_.exchange(true))
        return;
    std::shared_ptr<wire::Connection> conn;
    {
        std::lock_guard lk(edge_mu_);
        conn = edge_;
    }
    if (conn && !frozen_) {
        const std::uint64_t id = next_request_++;
        if (conn->send(wire::MsgType::unregister_camera, id, wire::encode_str(config_.camera.str()))) {
            std::unique_lock lk(edge_mu_);
            edge_cv_.wait_for(lk, config_.rpc_timeout, [&] { return acked_ == id; });
        }
    }
    if (conn)
        conn->shutdown();
    stop_transfer();
    if (keeper_.joinable()) {
        keeper_.request_stop();
        keeper_.join();
    }
    if (link_thread_.joinable()) {
        link_thread_.request_stop();
        link_thread_.join();
    }
    listener_.shutdown();
    if (accept_thread_.joinable())
        accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lk(sessions_mu_);
        for (auto& s : sessions_)
            s->shutdown();
        threads.swap(session_threads_);
    }
    for (auto& t : threads)
        t.join();
    listener_.close();
}

}  // namespace mez
