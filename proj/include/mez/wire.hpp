#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mez/frame.hpp"
#include "mez/socket.hpp"

namespace mez::wire {

// Frame on the wire: u32 length (of everything after it), u8 type, u64 request id, body.
enum class MsgType : std::uint8_t {
    connect = 1,
    connect_ack = 2,
    publish = 3,
    publish_ack = 4,
    get_camera_info = 5,
    camera_info_resp = 6,
    subscribe = 7,
    frame_delivery = 8,
    unsubscribe = 9,
    ack = 10,
    register_camera = 11,
    unregister_camera = 12,
    error = 13,
    infeasible_notice = 14,
    set_target = 15,
};

inline constexpr std::size_t kHeaderSize = 4 + 1 + 8;
inline constexpr std::uint32_t kMaxMessage = 256u << 20;

struct Message {
    MsgType type = MsgType::error;
    std::uint64_t id = 0;
    std::vector<std::uint8_t> body;
};

std::array<std::uint8_t, kHeaderSize> encode_header(MsgType type, std::uint64_t id, std::size_t body_size);

/// A stream connection with serialized writers. Reads belong to one thread.
class Connection {
public:
    explicit Connection(net::Socket s) : sock_(std::move(s)) {}

    Status send(const Message& m);
    Status send(MsgType type, std::uint64_t id, std::span<const std::uint8_t> body);
    /// Body split in pieces, written with one gather call.
    Status send_parts(MsgType type, std::uint64_t id, std::span<const std::span<const std::uint8_t>> parts);

    /// Errc::timeout when no message starts within `timeout`.
    Result<Message> receive(std::optional<std::chrono::milliseconds> timeout = std::nullopt);

    void shutdown() { sock_.shutdown(); }
    int fd() const { return sock_.fd(); }

private:
    net::Socket sock_;
    std::mutex write_mu_;
};

enum class Role : std::uint8_t { publisher = 0, subscriber = 1, camnode = 2, edge = 3 };

struct ConnectBody {
    Role role = Role::subscriber;
    std::string credentials;
};

struct CameraInfo {
    std::string camera;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    double fps = 0;
    std::string endpoint;

    bool operator==(const CameraInfo&) const = default;
};

struct SubscribeBody {
    std::string camera;
    Timestamp begin;
    Timestamp end;
    double latency_ms = 0;
    double accuracy_pct = 0;
};

struct AckBody {
    std::uint64_t value = 0;
    bool end_of_stream = false;
};

struct ErrorBody {
    Errc code = Errc::protocol_error;
    std::string message;
};

struct PublishAckBody {
    bool accepted = true;
    Timestamp recv_ts;
};

struct InfeasibleBody {
    std::uint64_t subscription = 0;
    double best_accuracy = 0;
};

struct TargetBody {
    double latency_ms = 0;
    double accuracy_pct = 0;
};

std::vector<std::uint8_t> encode(const ConnectBody& b);
std::vector<std::uint8_t> encode(const CameraInfo& b);
std::vector<std::uint8_t> encode(const std::vector<CameraInfo>& list);
std::vector<std::uint8_t> encode(const SubscribeBody& b);
std::vector<std::uint8_t> encode(const AckBody& b);
std::vector<std::uint8_t> encode(const ErrorBody& b);
std::vector<std::uint8_t> encode(const PublishAckBody& b);
std::vector<std::uint8_t> encode(const InfeasibleBody& b);
std::vector<std::uint8_t> encode(const TargetBody& b);
std::vector<std::uint8_t> encode_u64(std::uint64_t v);
std::vector<std::uint8_t> encode_str(std::string_view s);

Result<ConnectBody> decode_connect(std::span<const std::uint8_t> b);
Result<CameraInfo> decode_camera_info(std::span<const std::uint8_t> b);
Result<std::vector<CameraInfo>> decode_camera_list(std::span<const std::uint8_t> b);
Result<SubscribeBody> decode_subscribe(std::span<const std::uint8_t> b);
Result<AckBody> decode_ack(std::span<const std::uint8_t> b);
Result<ErrorBody> decode_error(std::span<const std::uint8_t> b);
Result<PublishAckBody> decode_publish_ack(std::span<const std::uint8_t> b);
Result<InfeasibleBody> decode_infeasible(std::span<const std::uint8_t> b);
Result<TargetBody> decode_target(std::span<const std::uint8_t> b);
Result<std::uint64_t> decode_u64(std::span<const std::uint8_t> b);
Result<std::string> decode_str(std::span<const std::uint8_t> b);

/// FrameDelivery body: u64 subscription id, serialized frame.
struct Delivery {
    std::uint64_t subscription = 0;
    Frame frame;
};
Result<Delivery> decode_delivery(std::span<const std::uint8_t> b);

/// Error reply carried as an Error message.
Error to_error(const Message& m);

}  // namespace mez::wire
