#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "mez/controller.hpp"
#include "mez/memlog.hpp"
#include "mez/netsim.hpp"
#include "mez/wire.hpp"

namespace mez {

/// Delays every upstream frame by a channel-model latency before it is written,
/// standing in for the wireless hop when camera and edge share a host.
struct LinkEmulation {
    LinearLatencyModel base;
    double jitter = 0.05;
    std::uint64_t seed = 1;
    double multiplier = 1.0;
};

struct CamBrokerConfig {
    CameraId camera{"cam000"};
    net::Address listen{"127.0.0.1", 0};
    std::optional<net::Address> edge;
    std::string credentials;
    int width = 640;
    int height = 360;
    double fps = 5;
    LogConfig log;
    // Without a profile frames go upstream unmodified.
    std::shared_ptr<const ProfileTable> profile;
    std::optional<LinearLatencyModel> model;
    std::optional<ControllerConfig> controller;
    int register_retries = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::milliseconds rpc_timeout{1000};
    // Overrun threshold for one knob pipeline pass; unset means 2x the running mean.
    std::optional<std::chrono::milliseconds> control_timeout;
    std::optional<LinkEmulation> link;
};

struct CamBrokerStats {
    std::uint64_t published = 0;
    std::uint64_t rejected_stale = 0;
    std::uint64_t sent_upstream = 0;
    std::uint64_t dropped_by_knobs = 0;
    std::uint64_t upstream_bytes = 0;
    std::uint64_t knob_errors = 0;
    std::uint64_t control_overruns = 0;
    std::uint64_t infeasible_notices = 0;
    std::uint64_t registrations = 0;
};

/// Camera-side broker: local log for publishers, controller, on-demand upstream transfer.
class CamBroker {
public:
    static Result<std::unique_ptr<CamBroker>> start(CamBrokerConfig config);
    ~CamBroker();

    CamBroker(const CamBroker&) = delete;
    CamBroker& operator=(const CamBroker&) = delete;

    /// Append from inside the camera process.
    Result<AppendOutcome> publish(Frame f);

    std::uint16_t port() const { return port_; }
    const MemLog& log() const { return *log_; }
    CamBrokerStats stats() const;
    bool transferring() const;
    /// True once the Edge link is lost and every re-registration failed.
    bool gave_up() const { return gave_up_.load(); }
    std::optional<KnobSetting> current_setting() const;

    /// Stops answering on every connection without closing them (fault injection).
    void freeze();
    /// Unregisters from the edge and stops all threads.
    void stop();

private:
    explicit CamBroker(CamBrokerConfig config);

    struct Pending {
        std::chrono::steady_clock::time_point due;
        Timestamp frame_ts;
        std::uint64_t seq;
        std::vector<std::uint8_t> body;
    };
    struct InFlight {
        Timestamp sent;
        std::uint64_t epoch;
    };

    Status register_with_edge();
    void accept_loop();
    void publisher_session(std::shared_ptr<wire::Connection> conn);
    void edge_reader(std::shared_ptr<wire::Connection> conn);
    Result<std::shared_ptr<wire::Connection>> dial_edge();
    void keeper_loop(std::stop_token st);
    void transfer_loop(std::stop_token st, Timestamp begin);
    void link_loop(std::stop_token st);
    void start_transfer(Timestamp begin);
    void stop_transfer();
    void on_delivery_ack(std::uint64_t seq, const wire::PublishAckBody& ack);
    Status send_upstream(Timestamp frame_ts, std::uint64_t seq, std::vector<std::uint8_t> body);

    CamBrokerConfig config_;
    std::unique_ptr<MemLog> log_;
    std::mutex append_mu_;
    net::Socket listener_;
    std::uint16_t port_ = 0;

    mutable std::mutex ctrl_mu_;
    std::optional<LatencyController> controller_;
    bool infeasible_ = false;
    double pipeline_mean_ms_ = 0;
    std::uint64_t pipeline_runs_ = 0;

    mutable std::mutex edge_mu_;
    std::condition_variable_any edge_cv_;
    std::shared_ptr<wire::Connection> edge_;
    std::atomic<std::uint64_t> next_request_{1};
    std::optional<std::uint64_t> acked_;

    std::mutex flight_mu_;
    std::map<std::uint64_t, InFlight> in_flight_;

    mutable std::mutex transfer_mu_;
    std::jthread transfer_;

    std::optional<Channel> channel_;
    std::chrono::steady_clock::time_point link_epoch_;
    std::mutex link_mu_;
    std::condition_variable_any link_cv_;
    std::deque<Pending> link_queue_;
    std::chrono::steady_clock::time_point link_last_due_{};
    std::jthread link_thread_;

    mutable std::mutex stats_mu_;
    CamBrokerStats stats_;

    std::atomic<bool> stopping_{false};
    std::atomic<bool> frozen_{false};
    std::atomic<bool> gave_up_{false};
    std::mutex sessions_mu_;
    std::vector<std::shared_ptr<wire::Connection>> sessions_;
    std::vector<std::thread> session_threads_;
    std::thread accept_thread_;
    std::jthread keeper_;
};

}  // namespace mez
