#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mez/memlog.hpp"
#include "mez/wire.hpp"

namespace mez {

/// Camera application side of Connect + Publish.
class PublisherClient {
public:
    static Result<std::unique_ptr<PublisherClient>> connect(const net::Address& cam_broker,
                                                            std::string credentials = {},
                                                            std::chrono::milliseconds timeout = std::chrono::milliseconds(50));

    /// Errc::timeout when no PublishAck arrives in time; the broker is then presumed failed.
    Result<AppendOutcome> publish(const Frame& f);
    std::uint64_t client_id() const { return client_; }

private:
    PublisherClient(std::unique_ptr<wire::Connection> c, std::chrono::milliseconds timeout)
        : conn_(std::move(c)), timeout_(timeout)
    {
    }

    std::unique_ptr<wire::Connection> conn_;
    std::chrono::milliseconds timeout_;
    std::uint64_t client_ = 0;
    std::uint64_t next_id_ = 1;
    std::vector<std::uint8_t> buf_;
};

struct SubscriberOptions {
    net::Address edge;
    std::string credentials;
    int retries = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::milliseconds rpc_timeout{1000};
    // Stream silence that triggers a liveness probe; unset means 3 frame intervals + base latency.
    std::optional<std::chrono::milliseconds> stream_timeout;
    double base_latency_ms = 100;
};

struct StreamEvent {
    enum class Kind { frame, infeasible, end } kind = Kind::end;
    std::optional<Frame> frame;
    Timestamp received;
    double best_accuracy = 0;
};

/// Subscriber side: discovery, one subscription, reconnect-and-resume on broker failure.
class SubscriberClient {
public:
    static Result<std::unique_ptr<SubscriberClient>> connect(SubscriberOptions opts);

    Result<std::vector<wire::CameraInfo>> camera_info();
    /// Returns the subscription id.
    Result<std::uint64_t> subscribe(const std::string& camera, Timestamp begin, Timestamp end, const QosBound& bound);
    /// Next stream event; Errc::timeout if nothing arrives within `wait`,
    /// Errc::gave_up once reconnection is exhausted.
    Result<StreamEvent> next(std::optional<std::chrono::milliseconds> wait = std::nullopt);
    Status unsubscribe();
    /// Makes a blocked next() return an end event.
    void cancel();

    std::optional<Timestamp> last_received() const { return last_; }
    std::uint64_t client_id() const { return client_; }
    int reconnects() const { return reconnects_; }

private:
    explicit SubscriberClient(SubscriberOptions opts) : opts_(std::move(opts)) {}

    Status dial();
    Status resubscribe();
    Status recover();
    Result<wire::Message> rpc(wire::MsgType type, std::vector<std::uint8_t> body);
    std::chrono::milliseconds stream_timeout() const;

    SubscriberOptions opts_;
    std::unique_ptr<wire::Connection> conn_;
    std::uint64_t client_ = 0;
    std::uint64_t next_id_ = 1;
    std::optional<std::uint64_t> sub_;
    wire::SubscribeBody sub_body_;
    double fps_ = 0;
    std::optional<Timestamp> last_;
    std::deque<wire::Message> backlog_;
    std::atomic<bool> cancelled_{false};
    bool ended_ = false;
    int reconnects_ = 0;
};

}  // namespace mez
