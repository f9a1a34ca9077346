#pragma once

#include <cstdint>

#include "mez/frame.hpp"

namespace mez {

/// Deterministic moving-gradient video with saturated moving blocks and luminance noise.
struct SynthOptions {
    int width = 640;
    int height = 360;
    std::uint64_t seed = 1;
    // Peak luminance noise per pixel, added equally to every channel.
    int noise = 8;
    int objects = 3;
    // Horizontal drift per frame.
    int motion_px = 4;
};

Frame synth_frame(const SynthOptions& opts, std::int64_t index, Timestamp ts, const CameraId& camera);

}  // namespace mez
