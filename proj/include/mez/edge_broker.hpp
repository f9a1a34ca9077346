#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "mez/memlog.hpp"
#include "mez/wire.hpp"

namespace mez {

struct EdgeBrokerConfig {
    net::Address listen{"127.0.0.1", 0};
    std::optional<std::filesystem::path> persist_dir;
    // Per-camera replica log.
    std::size_t capacity_bytes = std::size_t{256} << 20;
    int segment_count = 16;
    bool encrypt_at_rest = false;
    std::optional<EncryptionKey> key;
    // Empty disables authentication.
    std::string credentials;
};

struct EdgeStats {
    std::uint64_t upstream_frames = 0;
    std::uint64_t upstream_bytes = 0;
    std::uint64_t delivered = 0;
    std::uint64_t infeasible_forwarded = 0;
};

/// Aggregation-side broker: camera registry, replica logs, subscriber sessions.
class EdgeBroker {
public:
    static Result<std::unique_ptr<EdgeBroker>> start(EdgeBrokerConfig config);
    ~EdgeBroker();

    EdgeBroker(const EdgeBroker&) = delete;
    EdgeBroker& operator=(const EdgeBroker&) = delete;

    std::uint16_t port() const { return port_; }
    net::Address address() const { return {"127.0.0.1", port_}; }

    /// Recovery outcome per camera found in the persisted registry.
    const std::map<std::string, RecoveryReport>& recovery() const { return recovery_; }
    std::vector<wire::CameraInfo> cameras() const;
    std::size_t subscription_count() const;
    EdgeStats stats() const;
    /// Null when the camera is unknown.
    const MemLog* replica(const std::string& camera) const;

    void stop();

private:
    struct Session;
    struct Sub;
    struct Camera;

    explicit EdgeBroker(EdgeBrokerConfig config);

    Status load_registry();
    void save_registry_locked() const;
    Result<std::unique_ptr<MemLog>> open_replica(const std::string& camera, bool recover);

    void accept_loop();
    void serve(std::shared_ptr<Session> s);
    void handle_subscriber(const std::shared_ptr<Session>& s, wire::Message& m);
    void handle_camnode(const std::shared_ptr<Session>& s, wire::Message& m);
    void on_session_closed(const std::shared_ptr<Session>& s);

    void add_subscription(const std::shared_ptr<Session>& s, const wire::Message& m);
    void remove_subscription(const std::shared_ptr<Session>& s, const wire::Message& m);
    void drop_subscription(const std::shared_ptr<Camera>& cam, std::uint64_t id);
    void refresh_upstream(const std::shared_ptr<Camera>& cam, bool force_subscribe);
    void delivery_loop(std::stop_token st, std::shared_ptr<Camera> cam);
    void start_delivery(const std::shared_ptr<Camera>& cam);

    std::shared_ptr<Camera> find_camera(const std::string& id) const;

    EdgeBrokerConfig config_;
    net::Socket listener_;
    std::uint16_t port_ = 0;
    std::map<std::string, RecoveryReport> recovery_;

    mutable std::shared_mutex reg_mu_;
    std::map<std::string, std::shared_ptr<Camera>> cameras_;

    std::atomic<std::uint64_t> next_client_{1};
    std::atomic<std::uint64_t> next_sub_{1};

    mutable std::mutex stats_mu_;
    EdgeStats stats_;

    std::atomic<bool> stopping_{false};
    std::mutex sessions_mu_;
    std::vector<std::shared_ptr<Session>> sessions_;
    std::vector<std::thread> session_threads_;
    std::thread accept_thread_;
};

}  // namespace mez
