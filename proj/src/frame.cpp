#include "mez/frame.hpp"

#include <zlib.h>

#include <chrono>
#include <stdexcept>

#include "mez/bytes.hpp"

namespace mez {

Timestamp Timestamp::now()
{
    using namespace std::chrono;
    return {duration_cast<microseconds>(system_clock::now().time_since_epoch()).count()};
}

CameraId::CameraId(std::string id) : id_(std::move(id))
{
    if (id_.empty())
        throw std::invalid_argument("camera id must be non-empty");
}

std::string_view colorspace_name(Colorspace cs)
{
    switch (cs) {
    case Colorspace::bgr: return "bgr";
    case Colorspace::gray: return "gray";
    case Colorspace::hsv: return "hsv";
    case Colorspace::lab: return "lab";
    case Colorspace::luv: return "luv";
    }
    return "?";
}

Result<Frame> Frame::make(Timestamp ts, int width, int height, Colorspace cs,
                          std::vector<std::uint8_t> pixels, CameraId camera)
{
    if (width < 1 || height < 1 || width > 0xFFFF || height > 0xFFFF)
        return make_error(Errc::invalid_argument, "frame dimensions out of range");
    if (static_cast<std::uint8_t>(cs) > 4)
        return make_error(Errc::invalid_argument, "unknown colorspace");
    const std::size_t want = static_cast<std::size_t>(width) * height * channels(cs);
    if (pixels.size() != want)
        return make_error(Errc::invalid_argument, "pixel buffer length does not match shape");
    return Frame(ts, width, height, cs, std::move(pixels), std::move(camera));
}

Frame Frame::with_ts(Timestamp ts) const
{
    Frame f = *this;
    f.ts_ = ts;
    return f;
}

Result<QosBound> QosBound::make(double latency_max_ms, double accuracy_min_pct)
{
    if (!(latency_max_ms > 0))
        return make_error(Errc::invalid_argument, "latency bound must be positive");
    if (!(accuracy_min_pct > 0 && accuracy_min_pct <= 100))
        return make_error(Errc::invalid_argument, "accuracy bound must be in (0, 100]");
    return QosBound(latency_max_ms, accuracy_min_pct);
}

namespace {

void write_header(const Frame& f, ByteWriter& w)
{
    w.bytes(kFrameMagic);
    w.u8(kFrameVersion);
    w.i64(f.ts().micros);
    w.u16(static_cast<std::uint16_t>(f.width()));
    w.u16(static_cast<std::uint16_t>(f.height()));
    w.u8(static_cast<std::uint8_t>(f.colorspace()));
    w.str16(f.camera().str());
    w.u32(static_cast<std::uint32_t>(f.pixels().size()));
}

}  // namespace

std::size_t frame_header_size(const Frame& f)
{
    return 4 + 1 + 8 + 2 + 2 + 1 + 2 + f.camera().str().size() + 4;
}

std::size_t serialized_size(const Frame& f)
{
    return frame_header_size(f) + f.pixels().size();
}

void serialize_frame_into(const Frame& f, std::vector<std::uint8_t>& out)
{
    out.reserve(out.size() + serialized_size(f));
    ByteWriter w(std::move(out));
    write_header(f, w);
    w.bytes(f.pixels());
    out = w.take();
}

std::vector<std::uint8_t> serialize_frame(const Frame& f)
{
    std::vector<std::uint8_t> out;
    serialize_frame_into(f, out);
    return out;
}

Result<Frame> deserialize_frame(std::span<const std::uint8_t> data, std::size_t* consumed)
{
    ByteReader r(data);
    auto magic = r.bytes(4);
    if (r.failed() || !std::equal(magic.begin(), magic.end(), std::begin(kFrameMagic)))
        return make_error(Errc::corrupt, "bad frame magic");
    if (r.u8() != kFrameVersion)
        return make_error(Errc::corrupt, "unsupported frame version");
    const Timestamp ts{r.i64()};
    const int width = r.u16();
    const int height = r.u16();
    const std::uint8_t cs = r.u8();
    std::string camera = r.str16();
    const std::uint32_t len = r.u32();
    auto payload = r.bytes(len);
    if (r.failed())
        return make_error(Errc::corrupt, "truncated frame");
    if (cs > 4)
        return make_error(Errc::corrupt, "bad colorspace code");
    if (camera.empty())
        return make_error(Errc::corrupt, "empty camera id");
    auto f = Frame::make(ts, width, height, static_cast<Colorspace>(cs),
                         std::vector<std::uint8_t>(payload.begin(), payload.end()),
                         CameraId(std::move(camera)));
    if (!f)
        return make_error(Errc::corrupt, f.error().message);
    if (consumed)
        *consumed = r.position();
    return f;
}

std::uint32_t frame_crc32(std::uint32_t crc, const Frame& f)
{
    ByteWriter w;
    write_header(f, w);
    crc = static_cast<std::uint32_t>(::crc32(crc, w.buffer().data(), static_cast<uInt>(w.size())));
    const auto& px = f.pixels();
    std::size_t off = 0;
    while (off < px.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(px.size() - off, 1u << 30));
        crc = static_cast<std::uint32_t>(::crc32(crc, px.data() + off, n));
        off += n;
    }
    return crc;
}

std::vector<std::uint8_t> deflate_raw(std::span<const std::uint8_t> data)
{
    z_stream zs{};
    if (deflateInit2(&zs, 6, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw std::runtime_error("deflateInit2 failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(data.size())));
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END)
        throw std::runtime_error("deflate did not finish");
    out.resize(zs.total_out);
    return out;
}

std::size_t encoded_size(const Frame& f)
{
    return frame_header_size(f) + deflate_raw(f.pixels()).size();
}

}  // namespace mez
