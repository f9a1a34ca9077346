#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mez/status.hpp"

namespace mez {

enum class BenchMode { sim, loopback };

struct BenchOptions {
    BenchMode mode = BenchMode::sim;
    int nodes = 1;
    int subscribers = 1;
    double duration_s = 10;
    std::uint64_t seed = 1;
    double fps = 5;
    double latency_ms = 100;
    double accuracy_pct = 96;
    // Loopback only: delay upstream frames by the calibrated single-node channel.
    bool emulate_link = false;
    // Loopback only: samples published during the first warmup_s are not reported.
    double warmup_s = 1;
    int width = 640;
    int height = 360;
};

struct Breakdown {
    double publish = 0;
    double controller = 0;
    double network = 0;
    double broker = 0;
    double subscribe = 0;

    double total() const { return publish + controller + network + broker + subscribe; }
};

struct BenchReport {
    double p50_ms = 0;
    double p95_ms = 0;
    double p99_ms = 0;
    Breakdown mean_ms;
    Breakdown pct;
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_dropped = 0;
    std::uint64_t frames_delivered = 0;
    // One pub-sub latency per delivered frame (per subscriber in loopback).
    std::vector<double> latencies_ms;
};

Result<BenchReport> run_bench(const BenchOptions& opts);

/// Percentages from stage means; they sum to 100 unless every stage is zero.
Breakdown breakdown_percent(const Breakdown& mean_ms);

std::string format_report(const BenchOptions& opts, const BenchReport& r);
/// "metric,value" rows: percentiles, breakdown ms and %, frame counts.
std::string report_csv(const BenchReport& r);

}  // namespace mez
