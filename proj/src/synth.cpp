#include "mez/synth.hpp"

#include <algorithm>

namespace mez {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Block {
    int x, y, w, h;
    std::uint8_t b, g, r;
};

}  // namespace

Frame synth_frame(const SynthOptions& o, std::int64_t index, Timestamp ts, const CameraId& camera)
{
    const int w = o.width, h = o.height;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);

    constexpr std::uint8_t palette[][3] = {{30, 40, 210}, {200, 60, 30}, {40, 190, 60}, {190, 40, 170}};
    std::vector<Block> blocks;
    for (int i = 0; i < o.objects; ++i) {
        const std::uint64_t r = splitmix(o.seed * 131 + static_cast<std::uint64_t>(i));
        const int bw = std::max(2, w / 10), bh = std::max(2, h / 3);
        const int x0 = static_cast<int>(r % static_cast<std::uint64_t>(w));
        const int y0 = static_cast<int>((r >> 20) % static_cast<std::uint64_t>(std::max(1, h - bh)));
        const int x = static_cast<int>((x0 + index * o.motion_px * (i + 1)) % (w + bw)) - bw;
        const auto& c = palette[i % 4];
        blocks.push_back({x, y0, bw, bh, c[0], c[1], c[2]});
    }

    const std::int64_t shift = index * o.motion_px;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Background keeps one channel low so hue stays well defined.
            const std::int64_t gx = (x + shift) % (2 * w);
            const int ramp = static_cast<int>(gx < w ? gx : 2 * w - gx) * 170 / w;
            int b = 50 + ramp;
            int g = 210 - y * 150 / h;
            int r = 25;
            for (const Block& blk : blocks) {
                if (x >= blk.x && x < blk.x + blk.w && y >= blk.y && y < blk.y + blk.h) {
                    b = blk.b;
                    g = blk.g;
                    r = blk.r;
                }
            }
            if (o.noise > 0) {
                const std::uint64_t hsh =
                    splitmix(o.seed ^ (static_cast<std::uint64_t>(index) << 40) ^ (static_cast<std::uint64_t>(y) * w + x));
                const int d = static_cast<int>(hsh % static_cast<std::uint64_t>(2 * o.noise + 1)) - o.noise;
                b += d;
                g += d;
                r += d;
            }
            std::uint8_t* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
            p[0] = static_cast<std::uint8_t>(std::clamp(b, 0, 255));
            p[1] = static_cast<std::uint8_t>(std::clamp(g, 0, 255));
            p[2] = static_cast<std::uint8_t>(std::clamp(r, 0, 255));
        }
    }
    return Frame::make(ts, w, h, Colorspace::bgr, std::move(px), camera).value();
}

}  // namespace mez
