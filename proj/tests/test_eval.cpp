#include <doctest.h>

#include <algorithm>
#include <functional>

#include "mez/eval.hpp"
#include "support.hpp"

using namespace mez;

namespace {

BBox box(double x1, double y1, double x2, double y2) { return BBox::make(x1, y1, x2, y2).value(); }

BBox random_box(Rng& rng, double extent)
{
    const double x = rng.uniform(0, extent), y = rng.uniform(0, extent);
    return box(x, y, x + rng.uniform(1, extent / 2), y + rng.uniform(1, extent / 2));
}

// Largest number of exclusive pairs with IoU above the threshold.
int optimal_tp(const std::vector<BBox>& preds, const std::vector<BBox>& gts, double thr)
{
    std::vector<bool> used(preds.size());
    std::function<int(std::size_t)> go = [&](std::size_t g) -> int {
        if (g == gts.size())
            return 0;
        int best = go(g + 1);
        for (std::size_t p = 0; p < preds.size(); ++p)
            if (!used[p] && iou(preds[p], gts[g]) > thr) {
                used[p] = true;
                best = std::max(best, 1 + go(g + 1));
                used[p] = false;
            }
        return best;
    };
    return go(0);
}

}  // namespace

TEST_CASE("box validity")
{
    CHECK(BBox::make(0, 0, 1, 1));
    CHECK(BBox::make(1, 0, 1, 1).code() == Errc::invalid_argument);
    CHECK(!BBox::make(0, 2, 1, 1));
}

TEST_CASE("iou")
{
    CHECK(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0);
    CHECK(iou(box(0, 0, 1, 1), box(2, 2, 3, 3)) == 0.0);
    CHECK(iou(box(0, 0, 1, 1), box(1, 0, 2, 1)) == 0.0);
    CHECK(std::abs(iou(box(0, 0, 2, 2), box(1, 1, 3, 3)) - 1.0 / 7.0) < 1e-12);

    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const auto a = random_box(rng, 20), b = random_box(rng, 20);
        const double v = iou(a, b);
        CHECK(v == iou(b, a));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK((v == 1.0) == (a == b));
    }
}

TEST_CASE("match_detections basics")
{
    const std::vector<BBox> g = {box(0, 0, 10, 10), box(20, 20, 30, 30), box(50, 0, 60, 10)};
    CHECK(match_detections(g, g) == MatchResult{3, 0, 0});
    CHECK(match_detections({}, std::vector<BBox>{box(0, 0, 1, 1)}) == MatchResult{0, 0, 1});
    CHECK(match_detections(std::vector<BBox>{box(0, 0, 1, 1)}, {}) == MatchResult{0, 1, 0});

    // IoU exactly at the threshold does not match: (0,0,2,1) vs (0,0,1,1) is 0.5.
    CHECK(match_detections(std::vector<BBox>{box(0, 0, 2, 1)}, std::vector<BBox>{box(0, 0, 1, 1)}) ==
          MatchResult{0, 1, 1});

    // Two predictions on one truth: one TP, one FP.
    const std::vector<BBox> two = {box(0, 0, 10, 10), box(0, 0, 10, 9)};
    CHECK(match_detections(two, std::vector<BBox>{box(0, 0, 10, 10)}) == MatchResult{1, 1, 0});
}

TEST_CASE("match count identities on random instances")
{
    Rng rng(2024);
    int disagreements = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<BBox> p(rng.below(7)), g(rng.below(7));
        for (auto& b : p)
            b = random_box(rng, 12);
        for (auto& b : g)
            b = random_box(rng, 12);
        const auto m = match_detections(p, g, 0.5);
        CHECK(m.tp + m.fn == static_cast<int>(g.size()));
        CHECK(m.tp + m.fp == static_cast<int>(p.size()));
        CHECK(m.tp >= 0);
        const int opt = optimal_tp(p, g, 0.5);
        CHECK(m.tp <= opt);
        disagreements += m.tp != opt;
    }
    MESSAGE("greedy below optimal on " << disagreements << " of 1000 instances");
}

TEST_CASE("tp count is order independent without contention")
{
    Rng rng(8);
    int checked = 0;
    for (int i = 0; i < 2000 && checked < 300; ++i) {
        std::vector<BBox> p(1 + rng.below(5)), g(1 + rng.below(5));
        for (auto& b : p)
            b = random_box(rng, 30);
        for (auto& b : g)
            b = random_box(rng, 30);
        // Each box has at most one partner above the threshold.
        bool contention = false;
        for (const auto& a : g)
            contention |= std::count_if(p.begin(), p.end(), [&](const BBox& b) { return iou(a, b) > 0.5; }) > 1;
        for (const auto& a : p)
            contention |= std::count_if(g.begin(), g.end(), [&](const BBox& b) { return iou(a, b) > 0.5; }) > 1;
        if (contention)
            continue;
        ++checked;
        const int tp = match_detections(p, g).tp;
        auto gr = g;
        std::reverse(gr.begin(), gr.end());
        auto pr = p;
        std::reverse(pr.begin(), pr.end());
        CHECK(match_detections(pr, gr).tp == tp);
        CHECK(match_detections(p, gr).tp == tp);
    }
    CHECK(checked > 0);
}

TEST_CASE("ground-truth order matters under contention")
{
    // Distinct IoUs, yet greedy order changes the count.
    const BBox a = box(0, 0, 10, 1), b = box(3, 0, 13, 1);
    const std::vector<BBox> preds = {box(0.5, 0, 10, 1), box(0, 0, 8.5, 1)};
    CHECK(iou(a, preds[0]) == doctest::Approx(0.95));
    CHECK(iou(a, preds[1]) == doctest::Approx(0.85));
    CHECK(match_detections(preds, std::vector<BBox>{a, b}).tp == 1);
    CHECK(match_detections(preds, std::vector<BBox>{b, a}).tp == 2);
}

TEST_CASE("f1")
{
    CHECK(f1({5, 0, 0}) == 1.0);
    CHECK(f1({0, 3, 2}) == 0.0);
    CHECK(f1({0, 0, 0}) == 0.0);
    const MatchResult m{4, 1, 4};
    CHECK(precision(m) == doctest::Approx(0.8));
    CHECK(recall(m) == doctest::Approx(0.5));
    CHECK(std::abs(f1(m) - 0.6153846) < 1e-6);

    Rng rng(6);
    for (int i = 0; i < 500; ++i) {
        const MatchResult r{1 + static_cast<int>(rng.below(20)), static_cast<int>(rng.below(20)),
                            static_cast<int>(rng.below(20))};
        const double p = precision(r), q = recall(r);
        CHECK(f1(r) >= std::min(p, q) - 1e-15);
        CHECK(f1(r) <= std::max(p, q) + 1e-15);
    }
}

TEST_CASE("normalized_f1")
{
    CHECK(normalized_f1(0.7, 0.7).value() == 100.0);
    CHECK(normalized_f1(0.48, 0.50).value() == doctest::Approx(96.0).epsilon(1e-12));
    CHECK(normalized_f1(0.3, 0.0).code() == Errc::zero_baseline);
}

TEST_CASE("detection files")
{
    const auto d = parse_detections("# ts\tbox\n10\t0,0,2,2\n10\t1,1,3,3\n20\t5,5,6,7\n").value();
    CHECK(d.size() == 2);
    CHECK(d.at(10).size() == 2);
    CHECK(d.at(20).front() == box(5, 5, 6, 7));
    CHECK(!parse_detections("10\t0,0,2\n"));
    CHECK(!parse_detections("10\t2,2,1,1\n"));
    CHECK(!parse_detections("x\t0,0,1,1\n"));

    const auto gt = parse_detections("1\t0,0,10,10\n2\t0,0,10,10\n").value();
    const auto pr = parse_detections("1\t0,0,10,10\n3\t0,0,4,4\n").value();
    CHECK(match_all(pr, gt) == MatchResult{1, 1, 1});
}
