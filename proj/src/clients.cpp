#include "mez/clients.hpp"

#include <spdlog/spdlog.h>

#include <thread>

#include "mez/trace.hpp"

namespace mez {

namespace {

constexpr std::chrono::milliseconds kSlice{50};

bool is_reply(wire::MsgType t)
{
    return t == wire::MsgType::connect_ack || t == wire::MsgType::camera_info_resp || t == wire::MsgType::ack ||
           t == wire::MsgType::error || t == wire::MsgType::publish_ack;
}

}  // namespace

Result<std::unique_ptr<PublisherClient>> PublisherClient::connect(const net::Address& cam_broker,
                                                                  std::string credentials,
                                                                  std::chrono::milliseconds timeout)
{
    auto sock = net::connect_tcp(cam_broker, std::max(timeout, std::chrono::milliseconds(1000)));
    if (!sock)
        return sock.error();
    std::unique_ptr<PublisherClient> c(
        new PublisherClient(std::make_unique<wire::Connection>(std::move(sock).value()), timeout));
    if (auto s = c->conn_->send(wire::MsgType::connect, 0,
                                wire::encode(wire::ConnectBody{wire::Role::publisher, std::move(credentials)}));
        !s)
        return s.error();
    auto m = c->conn_->receive(std::max(timeout, std::chrono::milliseconds(1000)));
    if (!m)
        return m.error();
    if (m->type == wire::MsgType::error)
        return wire::to_error(*m);
    auto id = wire::decode_u64(m->body);
    if (m->type != wire::MsgType::connect_ack || !id)
        return make_error(Errc::protocol_error, "expected ConnectAck");
    c->client_ = *id;
    return c;
}

Result<AppendOutcome> PublisherClient::publish(const Frame& f)
{
    const std::uint64_t id = next_id_++;
    buf_.clear();
    serialize_frame_into(f, buf_);
    if (auto s = conn_->send(wire::MsgType::publish, id, buf_); !s)
        return s.error();
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            return make_error(Errc::timeout, "no PublishAck within " + std::to_string(timeout_.count()) + " ms");
        auto m = conn_->receive(left);
        if (!m)
            return m.error();
        if (m->id != id)
            continue;
        if (m->type == wire::MsgType::error)
            return wire::to_error(*m);
        auto ack = wire::decode_publish_ack(m->body);
        if (m->type != wire::MsgType::publish_ack || !ack)
            return make_error(Errc::protocol_error, "expected PublishAck");
        return ack->accepted ? AppendOutcome::appended : AppendOutcome::rejected_stale;
    }
}

Result<std::unique_ptr<SubscriberClient>> SubscriberClient::connect(SubscriberOptions opts)
{
    if (opts.retries < 0)
        return make_error(Errc::invalid_argument, "retry count must be >= 0");
    std::unique_ptr<SubscriberClient> c(new SubscriberClient(std::move(opts)));
    if (auto s = c->dial(); !s)
        return s.error();
    return c;
}

Status SubscriberClient::dial()
{
    auto sock = net::connect_tcp(opts_.edge, opts_.rpc_timeout);
    if (!sock)
        return sock.error();
    conn_ = std::make_unique<wire::Connection>(std::move(sock).value());
    backlog_.clear();
    auto m = rpc(wire::MsgType::connect, wire::encode(wire::ConnectBody{wire::Role::subscriber, opts_.credentials}));
    if (!m)
        return m.error();
    auto id = wire::decode_u64(m->body);
    if (m->type != wire::MsgType::connect_ack || !id)
        return make_error(Errc::protocol_error, "expected ConnectAck");
    client_ = *id;
    return {};
}

Result<wire::Message> SubscriberClient::rpc(wire::MsgType type, std::vector<std::uint8_t> body)
{
    const std::uint64_t id = next_id_++;
    if (auto s = conn_->send(type, id, body); !s)
        return s.error();
    const auto deadline = std::chrono::steady_clock::now() + opts_.rpc_timeout;
    for (;;) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            return make_error(Errc::timeout, "no reply within " + std::to_string(opts_.rpc_timeout.count()) + " ms");
        auto m = conn_->receive(left);
        if (!m)
            return m.error();
        if (m->id == id && is_reply(m->type)) {
            if (m->type == wire::MsgType::error)
                return wire::to_error(*m);
            return m;
        }
        backlog_.push_back(std::move(m).value());
    }
}

Result<std::vector<wire::CameraInfo>> SubscriberClient::camera_info()
{
    auto m = rpc(wire::MsgType::get_camera_info, {});
    if (!m)
        return m.error();
    return wire::decode_camera_list(m->body);
}

Result<std::uint64_t> SubscriberClient::subscribe(const std::string& camera, Timestamp begin, Timestamp end,
                                                  const QosBound& bound)
{
    auto cams = camera_info();
    if (!cams)
        return cams.error();
    fps_ = 0;
    for (const auto& c : *cams)
        if (c.camera == camera)
            fps_ = c.fps;
    sub_body_ = {camera, begin, end, bound.latency_max_ms(), bound.accuracy_min_pct()};
    ended_ = false;
    last_.reset();
    auto m = rpc(wire::MsgType::subscribe, wire::encode(sub_body_));
    if (!m)
        return m.error();
    auto ack = wire::decode_ack(m->body);
    if (!ack)
        return ack.error();
    sub_ = ack->value;
    return ack->value;
}

Status SubscriberClient::resubscribe()
{
    wire::SubscribeBody b = sub_body_;
    if (last_) {
        if (*last_ >= b.end) {
            ended_ = true;
            return {};
        }
        b.begin = {last_->micros + 1};
    }
    auto m = rpc(wire::MsgType::subscribe, wire::encode(b));
    if (!m)
        return m.error();
    auto ack = wire::decode_ack(m->body);
    if (!ack)
        return ack.error();
    sub_ = ack->value;
    return {};
}

Status SubscriberClient::recover()
{
    for (int attempt = 0; attempt < opts_.retries; ++attempt) {
        if (cancelled_)
            return make_error(Errc::gave_up, "cancelled");
        std::this_thread::sleep_for(opts_.backoff);
        auto s = dial();
        if (s && sub_)
            s = resubscribe();
        if (s) {
            ++reconnects_;
            spdlog::info("subscriber: reconnected after {} attempt(s)", attempt + 1);
            return {};
        }
        spdlog::warn("subscriber: reconnect attempt {} failed: {}", attempt + 1, s.error().to_string());
    }
    conn_.reset();
    return make_error(Errc::gave_up, "edge unreachable after " + std::to_string(opts_.retries) + " retries");
}

std::chrono::milliseconds SubscriberClient::stream_timeout() const
{
    if (opts_.stream_timeout)
        return *opts_.stream_timeout;
    const double interval = fps_ > 0 ? 1000.0 / fps_ : 1000.0;
    return std::chrono::milliseconds(static_cast<std::int64_t>(3 * interval + opts_.base_latency_ms));
}

Result<StreamEvent> SubscriberClient::next(std::optional<std::chrono::milliseconds> wait)
{
    const auto start = std::chrono::steady_clock::now();
    auto silent_since = start;
    for (;;) {
        if (cancelled_ || ended_ || (!sub_ && backlog_.empty()))
            return StreamEvent{};
        if (!conn_)
            return make_error(Errc::gave_up, "not connected");

        std::optional<wire::Message> msg;
        if (!backlog_.empty()) {
            msg = std::move(backlog_.front());
            backlog_.pop_front();
        } else {
            auto m = conn_->receive(kSlice);
            if (m) {
                msg = std::move(m).value();
            } else if (m.code() != Errc::timeout) {
                if (auto s = recover(); !s)
                    return s.error();
                silent_since = std::chrono::steady_clock::now();
                continue;
            }
        }

        const auto now = std::chrono::steady_clock::now();
        if (!msg) {
            if (wait && now - start >= *wait)
                return make_error(Errc::timeout, "no stream event");
            if (now - silent_since >= stream_timeout()) {
                // Silence alone is not failure: a live broker answers the probe.
                auto probe = camera_info();
                if (!probe) {
                    if (auto s = recover(); !s)
                        return s.error();
                }
                silent_since = std::chrono::steady_clock::now();
            }
            continue;
        }
        silent_since = now;

        switch (msg->type) {
        case wire::MsgType::frame_delivery: {
            auto d = wire::decode_delivery(msg->body);
            if (!d)
                return d.error();
            // Leftovers from a subscription this client already dropped.
            if (!sub_ || d->subscription != *sub_)
                continue;
            StreamEvent ev;
            ev.kind = StreamEvent::Kind::frame;
            ev.received = Timestamp::now();
            if (auto* t = active_tracer())
                t->mark_received(d->frame.camera().str(), d->frame.ts(), d->subscription, ev.received);
            last_ = d->frame.ts();
            ev.frame = std::move(d->frame);
            return ev;
        }
        case wire::MsgType::infeasible_notice: {
            auto n = wire::decode_infeasible(msg->body);
            if (!n || !sub_ || n->subscription != *sub_)
                continue;
            StreamEvent ev;
            ev.kind = StreamEvent::Kind::infeasible;
            ev.received = Timestamp::now();
            ev.best_accuracy = n->best_accuracy;
            return ev;
        }
        case wire::MsgType::ack: {
            auto a = wire::decode_ack(msg->body);
            if (a && a->end_of_stream && sub_ && a->value == *sub_) {
                ended_ = true;
                return StreamEvent{};
            }
            continue;
        }
        default:
            continue;
        }
    }
}

Status SubscriberClient::unsubscribe()
{
    if (!sub_)
        return make_error(Errc::unknown_subscription, "no active subscription");
    const std::uint64_t id = *sub_;
    sub_.reset();
    if (ended_)
        return {};
    auto m = rpc(wire::MsgType::unsubscribe, wire::encode_u64(id));
    if (!m)
        return m.error();
    return {};
}

void SubscriberClient::cancel() { cancelled_ = true; }

}  // namespace mez
