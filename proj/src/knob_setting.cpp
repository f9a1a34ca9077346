#include "mez/knob_setting.hpp"

#include <string>

namespace mez {

namespace {

constexpr std::array<std::string_view, 5> kResText = {"native", "1312x736", "960x528", "640x352", "480x256"};
constexpr std::array<std::string_view, 5> kCsText = {"none", "gray", "hsv", "lab", "luv"};
constexpr std::array<std::string_view, 5> kBlurText = {"none", "5", "8", "10", "15"};
constexpr std::array<std::string_view, 6> kFdText = {"off", "0", "0.18", "0.36", "0.54", "0.72"};

template <typename E, std::size_t N>
bool lookup(const std::array<std::string_view, N>& table, std::string_view v, E& out)
{
    for (std::size_t i = 0; i < N; ++i) {
        if (table[i] == v) {
            out = static_cast<E>(i);
            return true;
        }
    }
    return false;
}

}  // namespace

std::pair<int, int> resolution_box(Resolution r)
{
    switch (r) {
    case Resolution::native: return {0, 0};
    case Resolution::r1312x736: return {1312, 736};
    case Resolution::r960x528: return {960, 528};
    case Resolution::r640x352: return {640, 352};
    case Resolution::r480x256: return {480, 256};
    }
    return {0, 0};
}

int blur_side(BlurKnob b)
{
    constexpr int sides[] = {0, 5, 8, 10, 15};
    return sides[static_cast<int>(b)];
}

double framediff_threshold(FrameDiffKnob f)
{
    // t2..t4 evenly spaced between the published endpoints 0 and 0.72.
    constexpr double t[] = {-1.0, 0.0, 0.18, 0.36, 0.54, 0.72};
    return t[static_cast<int>(f)];
}

std::string KnobSetting::to_string() const
{
    std::string out;
    auto add = [&](std::string_view key, std::string_view value) {
        if (!out.empty())
            out += ';';
        out += key;
        out += '=';
        out += value;
    };
    if (resolution != Resolution::native)
        add("res", kResText[static_cast<int>(resolution)]);
    if (colorspace != ColorKnob::none)
        add("cs", kCsText[static_cast<int>(colorspace)]);
    if (blur != BlurKnob::none)
        add("blur", kBlurText[static_cast<int>(blur)]);
    if (framediff != FrameDiffKnob::off)
        add("fd", kFdText[static_cast<int>(framediff)]);
    return out.empty() ? "none" : out;
}

Result<KnobSetting> KnobSetting::parse(std::string_view text)
{
    KnobSetting s;
    if (text.empty() || text == "none")
        return s;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find(';', pos), text.size());
        const std::string_view field = text.substr(pos, end - pos);
        const std::size_t eq = field.find('=');
        if (eq == std::string_view::npos)
            return make_error(Errc::parse_error, "knob field without '=': " + std::string(field));
        const std::string_view key = field.substr(0, eq);
        std::string_view value = field.substr(eq + 1);
        bool ok = false;
        if (key == "res")
            ok = lookup(kResText, value, s.resolution);
        else if (key == "cs")
            ok = lookup(kCsText, value, s.colorspace);
        else if (key == "blur")
            ok = lookup(kBlurText, value, s.blur);
        else if (key == "fd")
            ok = lookup(kFdText, value == "0.0" ? std::string_view("0") : value, s.framediff);
        if (!ok)
            return make_error(Errc::parse_error, "bad knob field: " + std::string(field));
        pos = end + 1;
    }
    return s;
}

std::vector<KnobSetting> all_knob_settings()
{
    std::vector<KnobSetting> out;
    out.reserve(kResolutions.size() * kColorKnobs.size() * kBlurKnobs.size() * kFrameDiffKnobs.size());
    for (auto r : kResolutions)
        for (auto c : kColorKnobs)
            for (auto b : kBlurKnobs)
                for (auto f : kFrameDiffKnobs)
                    out.push_back({r, c, b, f});
    return out;
}

}  // namespace mez
