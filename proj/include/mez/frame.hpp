#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mez/status.hpp"

namespace mez {

/// Microseconds since the Unix epoch. Keys of every log.
struct Timestamp {
    std::int64_t micros = 0;

    constexpr auto operator<=>(const Timestamp&) const = default;

    static constexpr Timestamp min() { return {std::numeric_limits<std::int64_t>::min()}; }
    static constexpr Timestamp max() { return {std::numeric_limits<std::int64_t>::max()}; }
    static Timestamp now();
};

class CameraId {
public:
    /// Throws std::invalid_argument on an empty id.
    explicit CameraId(std::string id);

    const std::string& str() const { return id_; }

    auto operator<=>(const CameraId&) const = default;

private:
    std::string id_;
};

enum class Colorspace : std::uint8_t { bgr = 0, gray = 1, hsv = 2, lab = 3, luv = 4 };

constexpr int channels(Colorspace cs) { return cs == Colorspace::gray ? 1 : 3; }
std::string_view colorspace_name(Colorspace cs);

/// One video frame. Pixels are row-major with interleaved channels.
class Frame {
public:
    static Result<Frame> make(Timestamp ts, int width, int height, Colorspace cs,
                              std::vector<std::uint8_t> pixels, CameraId camera);

    Timestamp ts() const { return ts_; }
    int width() const { return width_; }
    int height() const { return height_; }
    Colorspace colorspace() const { return cs_; }
    int channel_count() const { return channels(cs_); }
    const std::vector<std::uint8_t>& pixels() const { return pixels_; }
    const CameraId& camera() const { return camera_; }

    Frame with_ts(Timestamp ts) const;

    bool operator==(const Frame&) const = default;

private:
    Frame(Timestamp ts, int width, int height, Colorspace cs, std::vector<std::uint8_t> pixels,
          CameraId camera)
        : ts_(ts), width_(width), height_(height), cs_(cs), pixels_(std::move(pixels)),
          camera_(std::move(camera))
    {
    }

    Timestamp ts_;
    int width_;
    int height_;
    Colorspace cs_;
    std::vector<std::uint8_t> pixels_;
    CameraId camera_;
};

using FramePtr = std::shared_ptr<const Frame>;

/// Latency/accuracy bound requested by a subscriber.
class QosBound {
public:
    static Result<QosBound> make(double latency_max_ms, double accuracy_min_pct);

    double latency_max_ms() const { return latency_max_ms_; }
    double accuracy_min_pct() const { return accuracy_min_pct_; }

    bool operator==(const QosBound&) const = default;

private:
    QosBound(double l, double a) : latency_max_ms_(l), accuracy_min_pct_(a) {}

    double latency_max_ms_;
    double accuracy_min_pct_;
};

// Frame wire/disk format:
//   "MEZ1" u8 version u64 ts u16 width u16 height u8 colorspace
//   u16 camera_len camera_bytes u32 payload_len payload
inline constexpr std::uint8_t kFrameMagic[4] = {'M', 'E', 'Z', '1'};
inline constexpr std::uint8_t kFrameVersion = 1;

std::size_t frame_header_size(const Frame& f);
std::size_t serialized_size(const Frame& f);
std::vector<std::uint8_t> serialize_frame(const Frame& f);
void serialize_frame_into(const Frame& f, std::vector<std::uint8_t>& out);

/// Parses one frame from the front of `data`; `consumed` receives its length.
Result<Frame> deserialize_frame(std::span<const std::uint8_t> data, std::size_t* consumed = nullptr);

/// CRC32 (IEEE) of serialize_frame(f) continued from `crc`, without materializing the bytes.
std::uint32_t frame_crc32(std::uint32_t crc, const Frame& f);

/// Raw DEFLATE (RFC 1951) at level 6.
std::vector<std::uint8_t> deflate_raw(std::span<const std::uint8_t> data);

/// Header length plus the DEFLATE-compressed payload length.
std::size_t encoded_size(const Frame& f);

}  // namespace mez

template <>
struct std::hash<mez::CameraId> {
    std::size_t operator()(const mez::CameraId& c) const noexcept { return std::hash<std::string>{}(c.str()); }
};
