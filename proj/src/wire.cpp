#include "mez/wire.hpp"

#include "mez/bytes.hpp"

namespace mez::wire {

namespace {

Error truncated(const char* what) { return make_error(Errc::protocol_error, std::string("malformed ") + what); }

template <typename T>
Result<T> finish(const ByteReader& r, T value, const char* what)
{
    if (r.failed() || r.remaining() != 0)
        return truncated(what);
    return value;
}

}  // namespace

std::array<std::uint8_t, kHeaderSize> encode_header(MsgType type, std::uint64_t id, std::size_t body_size)
{
    std::array<std::uint8_t, kHeaderSize> h{};
    const auto len = static_cast<std::uint32_t>(body_size + 9);
    for (int i = 0; i < 4; ++i)
        h[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
    h[4] = static_cast<std::uint8_t>(type);
    for (int i = 0; i < 8; ++i)
        h[static_cast<std::size_t>(5 + i)] = static_cast<std::uint8_t>(id >> (8 * i));
    return h;
}

Status Connection::send(const Message& m) { return send(m.type, m.id, m.body); }

Status Connection::send(MsgType type, std::uint64_t id, std::span<const std::uint8_t> body)
{
    const std::span<const std::uint8_t> parts[] = {body};
    return send_parts(type, id, parts);
}

Status Connection::send_parts(MsgType type, std::uint64_t id, std::span<const std::span<const std::uint8_t>> parts)
{
    std::size_t total = 0;
    for (const auto& p : parts)
        total += p.size();
    const auto header = encode_header(type, id, total);
    std::vector<std::span<const std::uint8_t>> all;
    all.reserve(parts.size() + 1);
    all.emplace_back(header);
    all.insert(all.end(), parts.begin(), parts.end());
    std::lock_guard lk(write_mu_);
    return net::send_parts(sock_.fd(), all);
}

Result<Message> Connection::receive(std::optional<std::chrono::milliseconds> timeout)
{
    if (timeout) {
        auto ready = net::wait_readable(sock_.fd(), *timeout);
        if (!ready)
            return ready.error();
        if (!*ready)
            return make_error(Errc::timeout, "no message within " + std::to_string(timeout->count()) + " ms");
    }
    std::array<std::uint8_t, kHeaderSize> h;
    if (auto s = net::recv_exact(sock_.fd(), h); !s)
        return s.error();
    ByteReader r(h);
    const std::uint32_t len = r.u32();
    Message m;
    m.type = static_cast<MsgType>(r.u8());
    m.id = r.u64();
    if (len < 9 || len > kMaxMessage)
        return make_error(Errc::protocol_error, "bad message length " + std::to_string(len));
    const auto t = static_cast<std::uint8_t>(m.type);
    if (t < 1 || t > 15)
        return make_error(Errc::protocol_error, "unknown message type " + std::to_string(t));
    m.body.resize(len - 9);
    if (auto s = net::recv_exact(sock_.fd(), m.body); !s)
        return s.error();
    return m;
}

std::vector<std::uint8_t> encode(const ConnectBody& b)
{
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(b.role));
    w.str16(b.credentials);
    return w.take();
}

namespace {

void put_info(ByteWriter& w, const CameraInfo& b)
{
    w.str16(b.camera);
    w.u16(b.width);
    w.u16(b.height);
    w.f64(b.fps);
    w.str16(b.endpoint);
}

CameraInfo get_info(ByteReader& r)
{
    CameraInfo c;
    c.camera = r.str16();
    c.width = r.u16();
    c.height = r.u16();
    c.fps = r.f64();
    c.endpoint = r.str16();
    return c;
}

}  // namespace

std::vector<std::uint8_t> encode(const CameraInfo& b)
{
    ByteWriter w;
    put_info(w, b);
    return w.take();
}

std::vector<std::uint8_t> encode(const std::vector<CameraInfo>& list)
{
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(list.size()));
    for (const auto& c : list)
        put_info(w, c);
    return w.take();
}

std::vector<std::uint8_t> encode(const SubscribeBody& b)
{
    ByteWriter w;
    w.str16(b.camera);
    w.i64(b.begin.micros);
    w.i64(b.end.micros);
    w.f64(b.latency_ms);
    w.f64(b.accuracy_pct);
    return w.take();
}

std::vector<std::uint8_t> encode(const AckBody& b)
{
    ByteWriter w;
    w.u64(b.value);
    w.u8(b.end_of_stream ? 1 : 0);
    return w.take();
}

std::vector<std::uint8_t> encode(const ErrorBody& b)
{
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(b.code));
    w.str16(b.message.substr(0, 60000));
    return w.take();
}

std::vector<std::uint8_t> encode(const PublishAckBody& b)
{
    ByteWriter w;
    w.u8(b.accepted ? 0 : 1);
    w.i64(b.recv_ts.micros);
    return w.take();
}

std::vector<std::uint8_t> encode(const InfeasibleBody& b)
{
    ByteWriter w;
    w.u64(b.subscription);
    w.f64(b.best_accuracy);
    return w.take();
}

std::vector<std::uint8_t> encode(const TargetBody& b)
{
    ByteWriter w;
    w.f64(b.latency_ms);
    w.f64(b.accuracy_pct);
    return w.take();
}

std::vector<std::uint8_t> encode_u64(std::uint64_t v)
{
    ByteWriter w;
    w.u64(v);
    return w.take();
}

std::vector<std::uint8_t> encode_str(std::string_view s)
{
    ByteWriter w;
    w.str16(s);
    return w.take();
}

Result<ConnectBody> decode_connect(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    ConnectBody c;
    const auto role = r.u8();
    if (role > 3)
        return truncated("connect");
    c.role = static_cast<Role>(role);
    c.credentials = r.str16();
    return finish(r, c, "connect");
}

Result<CameraInfo> decode_camera_info(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    CameraInfo c = get_info(r);
    return finish(r, c, "register");
}

Result<std::vector<CameraInfo>> decode_camera_list(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    const std::uint32_t n = r.u32();
    std::vector<CameraInfo> out;
    for (std::uint32_t i = 0; i < n && !r.failed(); ++i)
        out.push_back(get_info(r));
    return finish(r, out, "camera list");
}

Result<SubscribeBody> decode_subscribe(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    SubscribeBody s;
    s.camera = r.str16();
    s.begin = {r.i64()};
    s.end = {r.i64()};
    s.latency_ms = r.f64();
    s.accuracy_pct = r.f64();
    return finish(r, s, "subscribe");
}

Result<AckBody> decode_ack(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    AckBody a;
    a.value = r.u64();
    a.end_of_stream = r.u8() == 1;
    return finish(r, a, "ack");
}

Result<ErrorBody> decode_error(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    ErrorBody e;
    e.code = static_cast<Errc>(r.u16());
    e.message = r.str16();
    return finish(r, e, "error");
}

Result<PublishAckBody> decode_publish_ack(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    PublishAckBody a;
    a.accepted = r.u8() == 0;
    a.recv_ts = {r.i64()};
    return finish(r, a, "publish ack");
}

Result<InfeasibleBody> decode_infeasible(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    InfeasibleBody n;
    n.subscription = r.u64();
    n.best_accuracy = r.f64();
    return finish(r, n, "infeasible notice");
}

Result<TargetBody> decode_target(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    TargetBody t;
    t.latency_ms = r.f64();
    t.accuracy_pct = r.f64();
    return finish(r, t, "set target");
}

Result<std::uint64_t> decode_u64(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    const std::uint64_t v = r.u64();
    return finish(r, v, "id");
}

Result<std::string> decode_str(std::span<const std::uint8_t> b)
{
    ByteReader r(b);
    std::string s = r.str16();
    return finish(r, s, "string");
}

Result<Delivery> decode_delivery(std::span<const std::uint8_t> b)
{
    if (b.size() < 8)
        return truncated("frame delivery");
    ByteReader r(b.subspan(0, 8));
    const std::uint64_t sub = r.u64();
    std::size_t used = 0;
    auto f = deserialize_frame(b.subspan(8), &used);
    if (!f)
        return make_error(Errc::protocol_error, "frame delivery: " + f.error().message);
    if (used != b.size() - 8)
        return truncated("frame delivery");
    return Delivery{sub, std::move(f).value()};
}

Error to_error(const Message& m)
{
    auto e = decode_error(m.body);
    if (!e)
        return make_error(Errc::protocol_error, "malformed error reply");
    return make_error(e->code, e->message);
}

}  // namespace mez::wire
