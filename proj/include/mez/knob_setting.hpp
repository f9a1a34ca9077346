#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mez/status.hpp"

namespace mez {

enum class Resolution : std::uint8_t { native, r1312x736, r960x528, r640x352, r480x256 };
enum class ColorKnob : std::uint8_t { none, gray, hsv, lab, luv };
enum class BlurKnob : std::uint8_t { none, k5, k8, k10, k15 };
enum class FrameDiffKnob : std::uint8_t { off, t1, t2, t3, t4, t5 };

inline constexpr std::array kResolutions = {Resolution::native, Resolution::r1312x736, Resolution::r960x528,
                                            Resolution::r640x352, Resolution::r480x256};
inline constexpr std::array kColorKnobs = {ColorKnob::none, ColorKnob::gray, ColorKnob::hsv, ColorKnob::lab,
                                           ColorKnob::luv};
inline constexpr std::array kBlurKnobs = {BlurKnob::none, BlurKnob::k5, BlurKnob::k8, BlurKnob::k10,
                                          BlurKnob::k15};
inline constexpr std::array kFrameDiffKnobs = {FrameDiffKnob::off, FrameDiffKnob::t1, FrameDiffKnob::t2,
                                               FrameDiffKnob::t3, FrameDiffKnob::t4, FrameDiffKnob::t5};

/// Target bounding box; {0,0} for native.
std::pair<int, int> resolution_box(Resolution r);
/// Box-filter side; 0 for none.
int blur_side(BlurKnob b);
/// Difference threshold in [0, 0.72]; negative for off.
double framediff_threshold(FrameDiffKnob f);

/// One combination of quality knobs: the controller's actuator output.
struct KnobSetting {
    Resolution resolution = Resolution::native;
    ColorKnob colorspace = ColorKnob::none;
    BlurKnob blur = BlurKnob::none;
    FrameDiffKnob framediff = FrameDiffKnob::off;

    bool is_identity() const { return *this == KnobSetting{}; }

    /// "res=480x256;cs=gray;blur=5;fd=0.18", identity fields omitted, "none" when all are.
    std::string to_string() const;
    static Result<KnobSetting> parse(std::string_view text);

    auto operator<=>(const KnobSetting&) const = default;
};

/// Every combination of the enumerated knob values (5*5*5*6).
std::vector<KnobSetting> all_knob_settings();

}  // namespace mez

template <>
struct std::hash<mez::KnobSetting> {
    std::size_t operator()(const mez::KnobSetting& s) const noexcept
    {
        return static_cast<std::size_t>(s.resolution) | static_cast<std::size_t>(s.colorspace) << 8 |
               static_cast<std::size_t>(s.blur) << 16 | static_cast<std::size_t>(s.framediff) << 24;
    }
};
