#include <doctest.h>

#include <cmath>

#include "mez/kernels.hpp"
#include "mez/knobs.hpp"
#include "support.hpp"

using namespace mez;

namespace {

Frame bgr_frame(std::int64_t ts, int w, int h, std::vector<std::uint8_t> px)
{
    return Frame::make({ts}, w, h, Colorspace::bgr, std::move(px), CameraId("k")).value();
}

Frame one_pixel(std::uint8_t b, std::uint8_t g, std::uint8_t r) { return bgr_frame(0, 1, 1, {b, g, r}); }

// Direct replicate-edge box mean, rounded half up.
std::vector<std::uint8_t> blur_oracle(const Frame& f, int k)
{
    const int w = f.width(), h = f.height(), c = f.channel_count();
    std::vector<std::uint8_t> out(f.pixels().size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                long sum = 0;
                for (int j = 0; j < k; ++j)
                    for (int i = 0; i < k; ++i) {
                        const int yy = std::clamp(y - k / 2 + j, 0, h - 1);
                        const int xx = std::clamp(x - k / 2 + i, 0, w - 1);
                        sum += f.pixels()[static_cast<std::size_t>((yy * w + xx) * c + ch)];
                    }
                out[static_cast<std::size_t>((y * w + x) * c + ch)] =
                    static_cast<std::uint8_t>(std::floor(static_cast<double>(sum) / (k * k) + 0.5));
            }
    return out;
}

double diff_oracle(const Frame& a, const Frame& b)
{
    double s = 0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i)
        s += std::abs(static_cast<double>(a.pixels()[i]) - b.pixels()[i]);
    return s / 255.0 / static_cast<double>(a.pixels().size());
}

kernels::ImageView view(const Frame& f) { return {f.width(), f.height(), f.channel_count(), f.pixels()}; }

}  // namespace

TEST_CASE("fit_within keeps aspect ratio")
{
    CHECK(fit_within(1920, 1080, Resolution::r480x256).value() == std::pair{455, 256});
    CHECK(fit_within(1920, 1080, Resolution::native).value() == std::pair{1920, 1080});
    CHECK(fit_within(1920, 1080, Resolution::r1312x736).value().second <= 736);
    CHECK(fit_within(1920, 1080, Resolution::r1312x736).value().first <= 1312);
    CHECK(fit_within(320, 200, Resolution::r480x256).code() == Errc::upscale_requested);
}

TEST_CASE("downscale")
{
    const auto f = testing::synthetic_corpus(1, 1920, 1080).front();
    CHECK(downscale(f, Resolution::native).value() == f);

    const auto s = downscale(f, Resolution::r480x256).value();
    CHECK(s.width() == 455);
    CHECK(s.height() == 256);
    CHECK(s.ts() == f.ts());
    CHECK(s.camera() == f.camera());
    CHECK(s.colorspace() == f.colorspace());

    const auto flat = bgr_frame(7, 200, 120, std::vector<std::uint8_t>(200 * 120 * 3, 93));
    const auto fs = downscale(flat, Resolution::r480x256);
    CHECK(fs.code() == Errc::upscale_requested);
    const auto big_flat = bgr_frame(7, 1000, 600, std::vector<std::uint8_t>(1000 * 600 * 3, 93));
    const auto d = downscale(big_flat, Resolution::r640x352).value();
    CHECK(std::all_of(d.pixels().begin(), d.pixels().end(), [](auto v) { return v == 93; }));
}

TEST_CASE("gray conversion uses BT.601 luma")
{
    CHECK(convert_colorspace(one_pixel(255, 255, 255), Colorspace::gray).value().pixels()[0] == 255);
    CHECK(convert_colorspace(one_pixel(255, 0, 0), Colorspace::gray).value().pixels()[0] == 29);
    CHECK(convert_colorspace(one_pixel(0, 255, 0), Colorspace::gray).value().pixels()[0] == 150);
    CHECK(convert_colorspace(one_pixel(0, 0, 255), Colorspace::gray).value().pixels()[0] == 76);

    const auto f = testing::synthetic_corpus(1).front();
    const auto g = convert_colorspace(f, Colorspace::gray).value();
    CHECK(g.channel_count() == 1);
    CHECK(g.pixels().size() * 3 == f.pixels().size());
    CHECK(g.colorspace() == Colorspace::gray);
    CHECK(g.ts() == f.ts());
}

TEST_CASE("hsv, lab and luv reference points")
{
    // 8-bit HSV: hue halved into 0..179.
    CHECK(convert_colorspace(one_pixel(0, 0, 255), Colorspace::hsv).value().pixels() == std::vector<std::uint8_t>{0, 255, 255});
    CHECK(convert_colorspace(one_pixel(0, 255, 0), Colorspace::hsv).value().pixels() == std::vector<std::uint8_t>{60, 255, 255});
    CHECK(convert_colorspace(one_pixel(255, 0, 0), Colorspace::hsv).value().pixels() == std::vector<std::uint8_t>{120, 255, 255});
    CHECK(convert_colorspace(one_pixel(0, 0, 0), Colorspace::hsv).value().pixels() == std::vector<std::uint8_t>{0, 0, 0});

    const auto white = convert_colorspace(one_pixel(255, 255, 255), Colorspace::lab).value().pixels();
    CHECK(white[0] == 255);
    CHECK(std::abs(white[1] - 128) <= 1);
    CHECK(std::abs(white[2] - 128) <= 1);
    const auto black = convert_colorspace(one_pixel(0, 0, 0), Colorspace::lab).value().pixels();
    CHECK(black == std::vector<std::uint8_t>{0, 128, 128});

    const auto lw = convert_colorspace(one_pixel(255, 255, 255), Colorspace::luv).value().pixels();
    CHECK(lw[0] == 255);
    // Neutral: u = v = 0 scaled into 8 bits.
    CHECK(std::abs(lw[1] - 97) <= 1);
    CHECK(std::abs(lw[2] - 136) <= 1);
}

TEST_CASE("conversion needs BGR input")
{
    const auto g = testing::gray_frame(0, 4, 4, 10);
    CHECK(convert_colorspace(g, Colorspace::hsv).code() == Errc::unsupported_conversion);
}

TEST_CASE("blur")
{
    const auto flat = bgr_frame(3, 30, 20, std::vector<std::uint8_t>(30 * 20 * 3, 201));
    for (int k : {5, 8, 10, 15})
        CHECK(blur(flat, k).value() == flat);

    std::vector<std::uint8_t> ramp(25);
    for (int i = 0; i < 25; ++i)
        ramp[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i * 7);
    const auto r = Frame::make({0}, 5, 5, Colorspace::gray, ramp, CameraId("k")).value();
    // Mean of 0, 7, ..., 168.
    CHECK(blur(r, 5).value().pixels()[12] == 84);

    CHECK(blur(r, 8).code() == Errc::kernel_too_large);

    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
        auto f = testing::random_frame(rng, i, 40);
        if (std::min(f.width(), f.height()) < 15)
            continue;
        for (int k : {5, 8, 10, 15}) {
            const auto b = blur(f, k).value();
            CHECK(b.pixels() == blur_oracle(f, k));
            CHECK(b.ts() == f.ts());
        }
    }
}

TEST_CASE("frame_diff")
{
    const auto a = testing::gray_frame(0, 10, 10, 0);
    CHECK(frame_diff(a, a).value() == 0.0);
    CHECK(frame_diff(a, testing::gray_frame(1, 10, 10, 255)).value() == 1.0);

    auto px = a.pixels();
    px[37] = 255;
    const auto b = Frame::make({1}, 10, 10, Colorspace::gray, px, CameraId("cam")).value();
    CHECK(frame_diff(a, b).value() == doctest::Approx(0.01).epsilon(1e-12));

    CHECK(frame_diff(a, testing::gray_frame(0, 10, 11, 0)).code() == Errc::shape_mismatch);

    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const auto x = testing::random_frame(rng, 0, 12);
        auto ypx = x.pixels();
        for (auto& v : ypx)
            if (rng.below(3) == 0)
                v = static_cast<std::uint8_t>(rng.below(256));
        const auto y = Frame::make({1}, x.width(), x.height(), x.colorspace(), ypx, CameraId("cam")).value();
        const double d = frame_diff(x, y).value();
        CHECK(d == frame_diff(y, x).value());
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK((d == 0.0) == (x.pixels() == y.pixels()));
        CHECK(d == doctest::Approx(diff_oracle(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("should_drop")
{
    const auto a = testing::gray_frame(0, 4, 4, 10);
    FrameDiffState off;
    for (int i = 0; i < 5; ++i)
        CHECK(should_drop(off, a, FrameDiffKnob::off) == DropDecision::send);

    FrameDiffState st;
    CHECK(should_drop(st, a, FrameDiffKnob::t1) == DropDecision::send);
    CHECK(should_drop(st, a.with_ts({1}), FrameDiffKnob::t1) == DropDecision::drop);
    CHECK(should_drop(st, testing::gray_frame(2, 4, 4, 11), FrameDiffKnob::t1) == DropDecision::send);
}

TEST_CASE("drop rule matches brute-force replay")
{
    Rng rng(21);
    const auto stream = [&] {
        std::vector<Frame> v;
        std::vector<std::uint8_t> px(16 * 16, 128);
        for (int i = 0; i < 100; ++i) {
            const int changes = static_cast<int>(rng.below(4)) * static_cast<int>(rng.below(120));
            for (int c = 0; c < changes; ++c)
                px[rng.below(px.size())] = static_cast<std::uint8_t>(rng.below(256));
            v.push_back(Frame::make({i}, 16, 16, Colorspace::gray, px, CameraId("s")).value());
        }
        return v;
    }();
    for (auto knob : kFrameDiffKnobs) {
        const double thr = framediff_threshold(knob);
        std::vector<bool> expect, got;
        std::optional<Frame> prev;
        FrameDiffState st;
        for (const auto& f : stream) {
            const bool drop = knob != FrameDiffKnob::off && prev && diff_oracle(*prev, f) <= thr;
            if (!drop)
                prev = f;
            expect.push_back(drop);
            got.push_back(should_drop(st, f, knob) == DropDecision::drop);
        }
        CHECK(got == expect);
    }
}

TEST_CASE("apply_setting pipeline")
{
    const auto corpus = testing::synthetic_corpus(3, 1920, 1080);
    const auto& f = corpus[0];

    FrameDiffState s0;
    CHECK(apply_setting(f, KnobSetting{}, s0).value() == f);

    const KnobSetting s{Resolution::r480x256, ColorKnob::gray, BlurKnob::k5, FrameDiffKnob::off};
    FrameDiffState s1;
    const auto out = apply_setting(f, s, s1).value();
    REQUIRE(out);
    const auto manual = blur(convert_colorspace(downscale(f, Resolution::r480x256).value(), Colorspace::gray).value(), 5).value();
    CHECK(*out == manual);
    CHECK(encoded_size(*out) < encoded_size(f));
    CHECK(out->ts() == f.ts());
    CHECK(out->camera() == f.camera());

    FrameDiffState s2;
    FrameDiffState s3;
    CHECK(apply_setting(f, s, s2).value() == apply_setting(f, s, s3).value());

    // Identical frame under t1 is dropped.
    const KnobSetting d{Resolution::native, ColorKnob::none, BlurKnob::none, FrameDiffKnob::t1};
    FrameDiffState s4;
    CHECK(apply_setting(f, d, s4).value().has_value());
    CHECK(!apply_setting(f.with_ts({f.ts().micros + 1}), d, s4).value().has_value());
}

TEST_CASE("knob textual form")
{
    CHECK(KnobSetting{}.to_string() == "none");
    const KnobSetting s{Resolution::r480x256, ColorKnob::gray, BlurKnob::k5, FrameDiffKnob::t2};
    CHECK(s.to_string() == "res=480x256;cs=gray;blur=5;fd=0.18");
    CHECK(KnobSetting::parse(s.to_string()).value() == s);
    CHECK(KnobSetting::parse("none").value() == KnobSetting{});
    CHECK(KnobSetting::parse("").value() == KnobSetting{});
    CHECK(!KnobSetting::parse("res=123x45"));
    CHECK(!KnobSetting::parse("blur=6"));
    CHECK(!KnobSetting::parse("cs=rgb"));
    const auto all = all_knob_settings();
    CHECK(all.size() == 5 * 5 * 5 * 6);
    for (const auto& k : all)
        CHECK(KnobSetting::parse(k.to_string()).value() == k);
    CHECK(framediff_threshold(FrameDiffKnob::t1) == 0.0);
    CHECK(framediff_threshold(FrameDiffKnob::t5) == doctest::Approx(0.72));
}

TEST_CASE("serial and omp kernels agree bit for bit")
{
    Rng rng(77);
    for (int i = 0; i < 30; ++i) {
        const int w = 16 + static_cast<int>(rng.below(200));
        const int h = 16 + static_cast<int>(rng.below(150));
        std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
        for (auto& b : px)
            b = static_cast<std::uint8_t>(rng.below(256));
        const auto f = bgr_frame(0, w, h, px);
        const auto v = view(f);
        const int ow = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
        const int oh = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
        CHECK(kernels::serial::resize_bilinear(v, ow, oh) == kernels::omp::resize_bilinear(v, ow, oh));
        for (auto cs : {Colorspace::gray, Colorspace::hsv, Colorspace::lab, Colorspace::luv})
            CHECK(kernels::serial::convert_from_bgr(v, cs) == kernels::omp::convert_from_bgr(v, cs));
        for (int k : {5, 8, 10, 15})
            CHECK(kernels::serial::box_blur(v, k) == kernels::omp::box_blur(v, k));
        const auto other = std::vector<std::uint8_t>(px.rbegin(), px.rend());
        CHECK(kernels::serial::abs_diff_sum(px, other) == kernels::omp::abs_diff_sum(px, other));
    }
}

TEST_CASE("directional size effects on the synthetic corpus")
{
    for (const auto& f : testing::synthetic_corpus(4, 1920, 1080)) {
        const auto base = encoded_size(f);
        for (auto r : kResolutions)
            if (r != Resolution::native)
                CHECK(encoded_size(downscale(f, r).value()) < base);
        CHECK(encoded_size(convert_colorspace(f, Colorspace::gray).value()) < base);
        for (int k : {5, 8, 10, 15})
            CHECK(encoded_size(blur(f, k).value()) <= base);
    }
}
