#include <doctest.h>
#include <zlib.h>

#include <cstring>

#include "mez/knobs.hpp"
#include "support.hpp"

using namespace mez;

namespace {

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t expect)
{
    std::vector<std::uint8_t> out(expect);
    z_stream zs{};
    REQUIRE(inflateInit2(&zs, -15) == Z_OK);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    REQUIRE(rc == Z_STREAM_END);
    out.resize(zs.total_out);
    return out;
}

}  // namespace

TEST_CASE("frame invariants are enforced at construction")
{
    CHECK(Frame::make({0}, 2, 2, Colorspace::gray, std::vector<std::uint8_t>(4), CameraId("c")));
    CHECK(Frame::make({0}, 2, 2, Colorspace::bgr, std::vector<std::uint8_t>(4), CameraId("c")).code() ==
          Errc::invalid_argument);
    CHECK(!Frame::make({0}, 0, 2, Colorspace::gray, {}, CameraId("c")));
    CHECK(!Frame::make({0}, 2, 0, Colorspace::gray, {}, CameraId("c")));
    CHECK_THROWS_AS(CameraId(""), std::invalid_argument);
}

TEST_CASE("qos bound range")
{
    CHECK(QosBound::make(100, 96));
    CHECK(QosBound::make(1, 100));
    CHECK(!QosBound::make(0, 96));
    CHECK(!QosBound::make(-5, 96));
    CHECK(!QosBound::make(100, 0));
    CHECK(!QosBound::make(100, 100.5));
}

TEST_CASE("timestamps are totally ordered")
{
    CHECK(Timestamp{1} < Timestamp{2});
    CHECK(Timestamp::min() < Timestamp{0});
    CHECK(Timestamp{0} < Timestamp::max());
    const auto a = Timestamp::now();
    CHECK(a.micros > 1'600'000'000'000'000);
}

TEST_CASE("serialized layout byte by byte")
{
    const auto f = Frame::make({0x0102030405060708}, 2, 2, Colorspace::gray, {9, 8, 7, 6}, CameraId("ab")).value();
    const std::vector<std::uint8_t> expect = {
        'M', 'E', 'Z', '1', 1,                               // magic, version
        0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01,      // ts
        2, 0, 2, 0,                                          // width, height
        1,                                                   // gray
        2, 0, 'a', 'b',                                      // camera id
        4, 0, 0, 0,                                          // payload length
        9, 8, 7, 6,
    };
    CHECK(serialize_frame(f) == expect);
    CHECK(serialized_size(f) == expect.size());
    CHECK(frame_header_size(f) == expect.size() - 4);

    std::size_t used = 0;
    auto back = deserialize_frame(expect, &used);
    REQUIRE(back);
    CHECK(*back == f);
    CHECK(used == expect.size());
}

TEST_CASE("1x1 BGR frame carries three payload bytes")
{
    const auto f = Frame::make({5}, 1, 1, Colorspace::bgr, {1, 2, 3}, CameraId("c")).value();
    const auto bytes = serialize_frame(f);
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + frame_header_size(f) - 4, 4);
    CHECK(len == 3);
    CHECK(bytes.size() == frame_header_size(f) + 3);
}

TEST_CASE("serialization round-trips random frames")
{
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const auto f = testing::random_frame(rng, static_cast<std::int64_t>(rng.next() >> 1), 24,
                                             "cam-" + std::to_string(rng.below(1000)));
        auto back = deserialize_frame(serialize_frame(f));
        REQUIRE(back);
        CHECK(*back == f);
        CHECK(frame_crc32(0, f) == static_cast<std::uint32_t>(
                                       ::crc32(0, serialize_frame(f).data(), static_cast<uInt>(serialized_size(f)))));
    }
}

TEST_CASE("deserialization rejects damaged input")
{
    const auto f = testing::gray_frame(1, 4, 4, 3);
    auto bytes = serialize_frame(f);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(!deserialize_frame(bad_magic));
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK(!deserialize_frame(bad_version));
    auto bad_cs = bytes;
    bad_cs[17] = 7;
    CHECK(!deserialize_frame(bad_cs));
    bytes.pop_back();
    CHECK(!deserialize_frame(bytes));
    CHECK(!deserialize_frame(std::span<const std::uint8_t>{}));
}

TEST_CASE("canonical compression is raw deflate of the payload")
{
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const auto f = testing::random_frame(rng, i, 40);
        const auto packed = deflate_raw(f.pixels());
        CHECK(inflate_raw(packed, f.pixels().size()) == f.pixels());
        CHECK(encoded_size(f) == frame_header_size(f) + packed.size());
    }
}

TEST_CASE("encoded size examples")
{
    const auto flat = testing::gray_frame(0, 100, 100, 77);
    CHECK(encoded_size(flat) < 10000 + frame_header_size(flat));
    CHECK(encoded_size(flat) > 0);
    CHECK(encoded_size(flat) == encoded_size(flat));

    SynthOptions o;
    o.width = 1920;
    o.height = 1080;
    const auto big = synth_frame(o, 0, {0}, CameraId("c"));
    const auto small = downscale(big, Resolution::r480x256).value();
    CHECK(small.width() == 455);
    CHECK(small.height() == 256);
    CHECK(encoded_size(small) < encoded_size(big));
}

TEST_CASE("with_ts only changes the timestamp")
{
    const auto f = testing::gray_frame(1, 3, 3, 9);
    const auto g = f.with_ts({42});
    CHECK(g.ts() == Timestamp{42});
    CHECK(g.pixels() == f.pixels());
    CHECK(g.camera() == f.camera());
}
