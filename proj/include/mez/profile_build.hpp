#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "mez/eval.hpp"
#include "mez/frame.hpp"
#include "mez/knob_setting.hpp"
#include "mez/profile.hpp"

namespace mez {

/// Labelled corpus plus per-setting detector output on the modified frames.
struct CorpusInput {
    std::vector<Frame> frames;
    Detections ground_truth;
    // Must contain the identity setting: every score is normalized to it.
    std::map<KnobSetting, Detections> predictions;
    double iou_threshold = 0.5;
};

/// One entry per predicted setting: median encoded size of the transmitted frames
/// and F1 relative to the identity setting, in percent (capped at 100).
/// Settings scoring zero are left out.
Result<std::vector<ProfileEntry>> build_profile_entries(const CorpusInput& in);

/// Images in `dir` in name order; an integer file stem becomes the frame timestamp,
/// otherwise the position in the listing does.
Result<std::vector<Frame>> load_corpus(const std::filesystem::path& dir, const CameraId& camera);

}  // namespace mez
