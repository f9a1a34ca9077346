#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "mez/status.hpp"

namespace mez {

struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    /// Errc::invalid_argument unless x1 < x2 and y1 < y2.
    static Result<BBox> make(double x1, double y1, double x2, double y2);
    double area() const { return (x2 - x1) * (y2 - y1); }
    bool operator==(const BBox&) const = default;
};

struct MatchResult {
    int tp = 0;
    int fp = 0;
    int fn = 0;

    MatchResult& operator+=(const MatchResult& o)
    {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const MatchResult&) const = default;
};

double iou(const BBox& a, const BBox& b);

/// Ground truths in order each claim the unclaimed prediction of highest IoU
/// (lowest index on ties) when that IoU is strictly above the threshold.
MatchResult match_detections(std::span<const BBox> preds, std::span<const BBox> gts, double iou_threshold = 0.5);

double precision(const MatchResult& m);
double recall(const MatchResult& m);
/// Harmonic mean of precision and recall; 0 when tp is 0.
double f1(const MatchResult& m);
/// 100 * modified / baseline. Errc::zero_baseline when baseline is not positive.
Result<double> normalized_f1(double modified, double baseline);

/// Boxes per frame timestamp.
using Detections = std::map<std::int64_t, std::vector<BBox>>;

/// Lines "frame_ts<TAB>x1,y1,x2,y2"; '#' comments.
Result<Detections> parse_detections(std::string_view text);
Result<Detections> load_detections(const std::filesystem::path& path);

/// Per-frame matching summed over every frame present in either input.
MatchResult match_all(const Detections& preds, const Detections& gts, double iou_threshold = 0.5);

}  // namespace mez
