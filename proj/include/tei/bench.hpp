#pragma once

#include <cstdint>
#include <vector>

#include "tei/backbone.hpp"

namespace tei {

struct LatencyStats {
    double median_ms = 0;
    double iqr_ms = 0;
    int iters = 0;
    std::vector<double> samples_ms;
};

struct ThroughputStats {
    double clips_per_s = 0;
    double median_batch_ms = 0;
    int batch = 0;
    int iters = 0;
};

// Eval-mode forward timing on synthetic input; warmup iterations are
// discarded before statistics are taken.
LatencyStats bench_latency(Model<float>& model, int batch = 1, int warmup = 3,
                           int iters = 11);

ThroughputStats bench_throughput(Model<float>& model, int batch = 16, int iters = 5,
                                 int warmup = 2);

}  // namespace tei
