#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mez/netsim.hpp"
#include "mez/text.hpp"
#include "support.hpp"

using namespace mez;

namespace {

LinearLatencyModel jaad() { return fit_latency_model(kJaadSingleNode).value(); }

}  // namespace

TEST_CASE("transmit on the fitted JAAD base")
{
    Channel ch(jaad(), 0.0, 1);
    // Within the residual of the three-point fit.
    CHECK(std::abs(ch.transmit(610e3, 0) - 32.09) < 2.0);
    CHECK(std::abs(ch.transmit(970e3, 0) - 46.09) < 2.0);
    CHECK(ch.transmit(1e-9, 0) == doctest::Approx(jaad().intercept));

    const LinearLatencyModel duke{kDukeComplexSingleNode.second / kDukeComplexSingleNode.first, 0};
    Channel d(duke, 0.0, 1);
    REQUIRE(d.set_interference_step(0, 8.4));
    CHECK(d.transmit(kDukeComplexSingleNode.first, 1) == doctest::Approx(8.4 * 72.72));
}

TEST_CASE("transmit is affine in size with no jitter")
{
    Channel ch({3e-5, 7}, 0.0, 1);
    REQUIRE(ch.set_interference_step(0, 2.5));
    for (int i = 1; i <= 100; ++i) {
        const double size = 10'000.0 * i;
        CHECK(ch.transmit(size, 10) == doctest::Approx(2.5 * (7 + 3e-5 * size)).epsilon(1e-12));
    }
}

TEST_CASE("jitter stays in band and is seeded")
{
    Channel a(jaad(), 0.05, 9), b(jaad(), 0.05, 9), c(jaad(), 0.05, 10);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        const double x = a.transmit(800e3, i);
        CHECK(x == b.transmit(800e3, i));
        differs |= x != c.transmit(800e3, i);
        const double nominal = jaad().predict(800e3);
        CHECK(x >= nominal * 0.95);
        CHECK(x <= nominal * 1.05);
    }
    CHECK(differs);
}

TEST_CASE("interference schedule")
{
    Channel ch({1e-4, 0}, 0.0, 1);
    REQUIRE(ch.set_interference_step(10'000, 6.5));
    CHECK(ch.transmit(1e5, 9'999) == doctest::Approx(10));
    CHECK(ch.transmit(1e5, 10'000) == doctest::Approx(65));
    CHECK(ch.set_interference_step(10'000, 7).code() == Errc::non_monotonic_schedule);
    CHECK(ch.set_interference_step(5'000, 7).code() == Errc::non_monotonic_schedule);
    CHECK(!ch.set_interference_step(20'000, 0.5));

    Channel down({1e-4, 0}, 0.0, 1);
    REQUIRE(down.set_interference_step(0, 10));
    REQUIRE(down.set_interference_step(1000, 1));
    CHECK(down.transmit(1e5, 500) == doctest::Approx(100));
    CHECK(down.transmit(1e5, 1500) == doctest::Approx(10));
}

TEST_CASE("nearest-rank percentile")
{
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i)
        v.push_back(i);
    CHECK(percentile(v, 95).value() == 95);
    CHECK(percentile(std::vector<double>{4.5}, 37).value() == 4.5);
    CHECK(percentile(std::vector<double>(9, 2.0), 95).value() == 2.0);
    CHECK(percentile(std::vector<double>{}, 95).code() == Errc::empty_samples);

    Rng rng(3);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> s(1 + rng.below(50));
        for (auto& x : s)
            x = rng.uniform(0, 500);
        const double p = 1 + rng.below(100);
        auto sorted = s;
        std::sort(sorted.begin(), sorted.end());
        std::size_t rank = 0;
        while (static_cast<double>(rank) * 100.0 < p * static_cast<double>(s.size()))
            ++rank;
        CHECK(percentile(s, p).value() == sorted[rank - 1]);
    }
}

TEST_CASE("closed loop without the controller sits at base times multiplier")
{
    auto s = preset_scenario("jaad-step").value();
    s.controller_enabled = false;
    s.duration_s = 20;
    const auto r = run_closed_loop(s).value();
    std::vector<double> after;
    for (const auto& rec : r.records)
        if (rec.ts_sent_ms >= 6000)
            after.push_back(rec.latency_ms());
    const double native = s.profile->max_size();
    const double expect = s.base.predict(native) * 6.5;
    CHECK(percentile(after, 95).value() == doctest::Approx(expect).epsilon(0.06));
    CHECK(percentile(after, 50).value() == doctest::Approx(expect).epsilon(0.05));
    CHECK(r.knob_changes == 0);
}

TEST_CASE("closed loop with the controller settles under the bound")
{
    const auto s = preset_scenario("jaad-step").value();
    const auto r = run_closed_loop(s).value();
    CHECK(window_pass_fraction(r.records, 6000, 100) >= 0.95);
    CHECK(r.infeasible_steps == 0);
    for (const auto& rec : r.records) {
        CHECK(rec.ts_received_ms >= rec.ts_sent_ms);
        if (rec.ts_sent_ms >= 6000)
            CHECK(rec.accuracy_pct >= 96);
    }
    CHECK(!r.series.empty());
}

TEST_CASE("closed loop is deterministic")
{
    const auto s = preset_scenario("jaad-nodes-complex", 3, 5).value();
    const auto a = run_closed_loop(s).value();
    const auto b = run_closed_loop(s).value();
    CHECK(series_csv(a, true) == series_csv(b, true));
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].ts_received_ms == b.records[i].ts_received_ms);
        CHECK(a.records[i].camera_id == b.records[i].camera_id);
    }
    CHECK(a.log == b.log);

    const auto other = run_closed_loop(preset_scenario("jaad-nodes-complex", 3, 6).value()).value();
    CHECK(series_csv(other, true) != series_csv(a, true));
}

TEST_CASE("virtual time moves forward")
{
    const auto r = run_closed_loop(preset_scenario("duke-10x").value()).value();
    double last = -1;
    for (const auto& p : r.series) {
        CHECK(p.t_ms >= last);
        last = p.t_ms;
    }
    for (const auto& rec : r.records)
        CHECK(rec.ts_received_ms >= rec.ts_sent_ms);
}

TEST_CASE("zero duration gives an empty series")
{
    auto s = preset_scenario("jaad-step").value();
    s.duration_s = 0;
    const auto r = run_closed_loop(s).value();
    CHECK(r.series.empty());
    CHECK(r.records.empty());
}

TEST_CASE("scenario file")
{
    testing::TempDir dir;
    const auto t = ProfileTable::build(synthesize_profile({})).value();
    REQUIRE(save_profile(t, dir / "p.tsv"));
    REQUIRE(text::write_file(dir / "s.json", R"({
        "channel": {"points": [[610000, 32.09], [760000, 35.16], [970000, 46.09]],
                    "jitter": 0.02, "seed": 4, "schedule": [[5000, 6.5]]},
        "profile": "p.tsv",
        "bound": {"latency_ms": 100, "accuracy_pct": 96},
        "fps": 5, "duration_s": 12
    })"));
    const auto s = load_scenario(dir / "s.json").value();
    CHECK(s.jitter == 0.02);
    CHECK(s.seed == 4);
    CHECK(s.schedule.size() == 1);
    CHECK(s.profile->entries().size() == t.entries().size());
    CHECK(s.duration_s == 12);
    const auto r = run_closed_loop(s).value();
    CHECK(r.records.size() == 60);

    const auto csv = series_csv(r);
    CHECK(csv.rfind("t_virtual_ms,p95_ms,setting,accuracy_pct\n", 0) == 0);

    CHECK(!parse_scenario("{"));
    CHECK(!parse_scenario(R"({"channel": {"slope": 1e-5}})"));
    CHECK(parse_scenario(R"({"channel": {"slope": 1e-5, "schedule": [[10, 2], [5, 3]]},
                             "profile": {"synthetic": {}}, "bound": {"latency_ms": 100, "accuracy_pct": 95}})")
              .ok());
    CHECK(!run_closed_loop(parse_scenario(R"({"channel": {"slope": 1e-5, "schedule": [[10, 2], [5, 3]]},
                             "profile": {"synthetic": {}}, "bound": {"latency_ms": 100, "accuracy_pct": 95}})")
                               .value()));
}

TEST_CASE("node presets")
{
    for (int n = 1; n <= 5; ++n)
        CHECK(preset_scenario("jaad-nodes-complex", n).value().cameras == n);
    CHECK(!preset_scenario("jaad-nodes-complex", 6));
    CHECK(!preset_scenario("nope"));
}
