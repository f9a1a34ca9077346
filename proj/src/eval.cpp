#include "mez/eval.hpp"

#include <algorithm>
#include <set>

#include "mez/text.hpp"

namespace mez {

Result<BBox> BBox::make(double x1, double y1, double x2, double y2)
{
    if (!(x1 < x2) || !(y1 < y2))
        return make_error(Errc::invalid_argument, "box corners must satisfy x1 < x2 and y1 < y2");
    return BBox{x1, y1, x2, y2};
}

double iou(const BBox& a, const BBox& b)
{
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0)
        return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(std::span<const BBox> preds, std::span<const BBox> gts, double iou_threshold)
{
    std::vector<bool> claimed(preds.size(), false);
    MatchResult m;
    for (const BBox& g : gts) {
        std::ptrdiff_t best = -1;
        double best_iou = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (claimed[i])
                continue;
            const double v = iou(g, preds[i]);
            if (best < 0 || v > best_iou) {
                best = static_cast<std::ptrdiff_t>(i);
                best_iou = v;
            }
        }
        if (best >= 0 && best_iou > iou_threshold) {
            claimed[static_cast<std::size_t>(best)] = true;
            ++m.tp;
        } else {
            ++m.fn;
        }
    }
    m.fp = static_cast<int>(preds.size()) - m.tp;
    return m;
}

double precision(const MatchResult& m) { return m.tp == 0 ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fp); }
double recall(const MatchResult& m) { return m.tp == 0 ? 0.0 : static_cast<double>(m.tp) / (m.tp + m.fn); }

double f1(const MatchResult& m)
{
    if (m.tp == 0)
        return 0.0;
    const double p = precision(m), r = recall(m);
    return 2.0 * (p * r) / (p + r);
}

Result<double> normalized_f1(double modified, double baseline)
{
    if (!(baseline > 0))
        return make_error(Errc::zero_baseline, "baseline F1 must be positive");
    return 100.0 * modified / baseline;
}

Result<Detections> parse_detections(std::string_view content)
{
    Detections out;
    int line_no = 0;
    for (std::string_view line : text::split(content, '\n')) {
        ++line_no;
        const std::string_view t = text::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto err = [&](const char* what) {
            return make_error(Errc::parse_error, "line " + std::to_string(line_no) + ": " + what);
        };
        const auto fields = text::split(t, '\t');
        if (fields.size() != 2)
            return err("expected frame_ts<TAB>x1,y1,x2,y2");
        const auto ts = text::to_int(fields[0]);
        const auto coords = text::split(fields[1], ',');
        if (!ts || coords.size() != 4)
            return err("expected frame_ts<TAB>x1,y1,x2,y2");
        double v[4];
        for (int i = 0; i < 4; ++i) {
            const auto d = text::to_double(coords[static_cast<std::size_t>(i)]);
            if (!d)
                return err("bad coordinate");
            v[i] = *d;
        }
        auto box = BBox::make(v[0], v[1], v[2], v[3]);
        if (!box)
            return err("box corners must satisfy x1 < x2 and y1 < y2");
        out[*ts].push_back(*box);
    }
    return out;
}

Result<Detections> load_detections(const std::filesystem::path& path)
{
    auto content = text::read_file(path);
    if (!content)
        return content.error();
    return parse_detections(*content);
}

MatchResult match_all(const Detections& preds, const Detections& gts, double iou_threshold)
{
    std::set<std::int64_t> frames;
    for (const auto& [ts, _] : preds)
        frames.insert(ts);
    for (const auto& [ts, _] : gts)
        frames.insert(ts);
    static const std::vector<BBox> none;
    MatchResult total;
    for (std::int64_t ts : frames) {
        const auto p = preds.find(ts);
        const auto g = gts.find(ts);
        total += match_detections(p == preds.end() ? none : p->second, g == gts.end() ? none : g->second,
                                  iou_threshold);
    }
    return total;
}

}  // namespace mez
