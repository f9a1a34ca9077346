#include "mez/profile_build.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "mez/image_io.hpp"
#include "mez/knobs.hpp"
#include "mez/text.hpp"

namespace mez {

Result<std::vector<ProfileEntry>> build_profile_entries(const CorpusInput& in)
{
    if (in.frames.empty())
        return make_error(Errc::invalid_argument, "empty corpus");
    auto base = in.predictions.find(KnobSetting{});
    if (base == in.predictions.end())
        return make_error(Errc::invalid_argument, "predictions for the identity setting are required");
    const double baseline = f1(match_all(base->second, in.ground_truth, in.iou_threshold));

    std::vector<ProfileEntry> out;
    for (const auto& [setting, preds] : in.predictions) {
        FrameDiffState diff;
        std::vector<double> sizes;
        for (const auto& f : in.frames) {
            auto m = apply_setting(f, setting, diff);
            if (!m)
                return make_error(m.code(), setting.to_string() + ": " + m.error().message);
            if (m->has_value())
                sizes.push_back(static_cast<double>(encoded_size(**m)));
        }
        if (sizes.empty())
            return make_error(Errc::invalid_argument, setting.to_string() + " drops every frame");
        std::sort(sizes.begin(), sizes.end());
        const std::size_t n = sizes.size();
        const double median = n % 2 ? sizes[n / 2] : (sizes[n / 2 - 1] + sizes[n / 2]) / 2;

        auto acc = normalized_f1(f1(match_all(preds, in.ground_truth, in.iou_threshold)), baseline);
        if (!acc)
            return acc.error();
        const double pct = std::min(100.0, *acc);
        if (pct <= 0) {
            spdlog::warn("profile-build: {} scores zero, left out", setting.to_string());
            continue;
        }
        out.push_back({setting, median, pct});
    }
    return out;
}

Result<std::vector<Frame>> load_corpus(const std::filesystem::path& dir, const CameraId& camera)
{
    if (!std::filesystem::is_directory(dir))
        return make_error(Errc::not_found, dir.string() + " is not a directory");
    std::vector<Frame> frames;
    std::int64_t index = 0;
    for (const auto& p : list_images(dir)) {
        const auto stem = text::to_int(p.stem().string());
        auto f = read_pnm(p, {stem ? *stem : index}, camera);
        if (!f)
            return make_error(f.code(), p.string() + ": " + f.error().message);
        frames.push_back(std::move(f).value());
        ++index;
    }
    if (frames.empty())
        return make_error(Errc::not_found, "no images in " + dir.string());
    return frames;
}

}  // namespace mez
