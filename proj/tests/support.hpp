#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mez/frame.hpp"
#include "mez/rng.hpp"
#include "mez/synth.hpp"

namespace testing {

// Removed on destruction.
class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("mez-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline mez::Frame gray_frame(std::int64_t ts, int w, int h, std::uint8_t fill, const std::string& cam = "cam")
{
    return mez::Frame::make({ts}, w, h, mez::Colorspace::gray,
                            std::vector<std::uint8_t>(static_cast<std::size_t>(w * h), fill), mez::CameraId(cam))
        .value();
}

inline mez::Frame random_frame(mez::Rng& rng, std::int64_t ts, int max_side, const std::string& cam = "cam")
{
    const int w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side)));
    const int h = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side)));
    const auto cs = static_cast<mez::Colorspace>(rng.below(5));
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * mez::channels(cs)));
    for (auto& b : px)
        b = static_cast<std::uint8_t>(rng.below(256));
    return mez::Frame::make({ts}, w, h, cs, std::move(px), mez::CameraId(cam)).value();
}

// The bundled synthetic corpus: generated, not stored.
inline std::vector<mez::Frame> synthetic_corpus(int count, int width = 640, int height = 360, std::uint64_t seed = 3)
{
    mez::SynthOptions o;
    o.width = width;
    o.height = height;
    o.seed = seed;
    std::vector<mez::Frame> out;
    for (int i = 0; i < count; ++i)
        out.push_back(mez::synth_frame(o, i, {1000 + i * 200'000}, mez::CameraId("corpus")));
    return out;
}

}  // namespace testing
