#pragma once

#include <optional>
#include <utility>

#include "mez/frame.hpp"
#include "mez/knob_setting.hpp"

namespace mez {

/// Output dimensions when fitting (w, h) inside `r`'s box with aspect ratio kept.
/// Returns {w, h} for native.
Result<std::pair<int, int>> fit_within(int width, int height, Resolution r);

Result<Frame> downscale(const Frame& f, Resolution target);
Result<Frame> convert_colorspace(const Frame& f, Colorspace target);
Result<Frame> blur(const Frame& f, int kernel_side);

/// Mean absolute per-byte difference scaled to [0, 1].
Result<double> frame_diff(const Frame& prev, const Frame& cur);

/// Last transmitted frame of one camera.
struct FrameDiffState {
    std::optional<Frame> prev;
};

enum class DropDecision { send, drop };

DropDecision should_drop(FrameDiffState& state, const Frame& cur, FrameDiffKnob threshold);

/// Frame-diff decision on the unmodified frame, then resolution, colorspace, blur.
/// nullopt means the frame was dropped.
Result<std::optional<Frame>> apply_setting(const Frame& f, const KnobSetting& s, FrameDiffState& state);

}  // namespace mez
