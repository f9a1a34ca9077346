#include "mez/knobs.hpp"

#include <cmath>

#include "mez/kernels.hpp"

namespace mez {

namespace {

kernels::ImageView view(const Frame& f)
{
    return {f.width(), f.height(), f.channel_count(), f.pixels()};
}

Colorspace to_colorspace(ColorKnob c)
{
    switch (c) {
    case ColorKnob::gray: return Colorspace::gray;
    case ColorKnob::hsv: return Colorspace::hsv;
    case ColorKnob::lab: return Colorspace::lab;
    case ColorKnob::luv: return Colorspace::luv;
    case ColorKnob::none: break;
    }
    return Colorspace::bgr;
}

}  // namespace

Result<std::pair<int, int>> fit_within(int width, int height, Resolution r)
{
    if (r == Resolution::native)
        return std::pair{width, height};
    const auto [tw, th] = resolution_box(r);
    if (tw > width || th > height)
        return make_error(Errc::upscale_requested,
                          std::to_string(width) + "x" + std::to_string(height) + " is smaller than the target box");
    const double scale = std::min(static_cast<double>(tw) / width, static_cast<double>(th) / height);
    // nearbyint rounds half to even under the default rounding mode.
    const int w = std::max(1, static_cast<int>(std::nearbyint(width * scale)));
    const int h = std::max(1, static_cast<int>(std::nearbyint(height * scale)));
    return std::pair{w, h};
}

Result<Frame> downscale(const Frame& f, Resolution target)
{
    auto dims = fit_within(f.width(), f.height(), target);
    if (!dims)
        return dims.error();
    const auto [w, h] = *dims;
    if (w == f.width() && h == f.height())
        return f;
    return Frame::make(f.ts(), w, h, f.colorspace(), kernels::omp::resize_bilinear(view(f), w, h), f.camera());
}

Result<Frame> convert_colorspace(const Frame& f, Colorspace target)
{
    if (f.colorspace() != Colorspace::bgr)
        return make_error(Errc::unsupported_conversion,
                          "conversion source must be bgr, got " + std::string(colorspace_name(f.colorspace())));
    if (target == Colorspace::bgr)
        return f;
    return Frame::make(f.ts(), f.width(), f.height(), target, kernels::omp::convert_from_bgr(view(f), target),
                       f.camera());
}

Result<Frame> blur(const Frame& f, int kernel_side)
{
    if (kernel_side < 1)
        return make_error(Errc::invalid_argument, "kernel side must be positive");
    if (kernel_side > std::min(f.width(), f.height()))
        return make_error(Errc::kernel_too_large, std::to_string(kernel_side) + " exceeds frame size");
    return Frame::make(f.ts(), f.width(), f.height(), f.colorspace(), kernels::omp::box_blur(view(f), kernel_side),
                       f.camera());
}

Result<double> frame_diff(const Frame& prev, const Frame& cur)
{
    if (prev.width() != cur.width() || prev.height() != cur.height() || prev.colorspace() != cur.colorspace())
        return make_error(Errc::shape_mismatch);
    const auto& a = prev.pixels();
    const std::uint64_t sum = kernels::omp::abs_diff_sum(a, cur.pixels());
    return static_cast<double>(sum) / (255.0 * static_cast<double>(a.size()));
}

DropDecision should_drop(FrameDiffState& state, const Frame& cur, FrameDiffKnob threshold)
{
    if (threshold != FrameDiffKnob::off && state.prev) {
        auto d = frame_diff(*state.prev, cur);
        if (d && *d <= framediff_threshold(threshold))
            return DropDecision::drop;
    }
    state.prev = cur;
    return DropDecision::send;
}

Result<std::optional<Frame>> apply_setting(const Frame& f, const KnobSetting& s, FrameDiffState& state)
{
    if (should_drop(state, f, s.framediff) == DropDecision::drop)
        return std::optional<Frame>{};
    if (s.resolution == Resolution::native && s.colorspace == ColorKnob::none && s.blur == BlurKnob::none)
        return std::optional<Frame>{f};

    auto out = downscale(f, s.resolution);
    if (!out)
        return out.error();
    if (s.colorspace != ColorKnob::none) {
        out = convert_colorspace(*out, to_colorspace(s.colorspace));
        if (!out)
            return out.error();
    }
    if (s.blur != BlurKnob::none) {
        out = blur(*out, blur_side(s.blur));
        if (!out)
            return out.error();
    }
    return std::optional<Frame>{std::move(out).value()};
}

}  // namespace mez
