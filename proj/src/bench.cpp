#include "tei/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

namespace tei {

namespace {

using clock = std::chrono::steady_clock;

Tensor32 random_clips(const NetworkSpec& spec, int batch, uint64_t seed) {
    Tensor32 t({batch, spec.frames, 3, spec.spatial, spec.spatial});
    std::mt19937 rng(static_cast<uint32_t>(seed));
    std::uniform_real_distribution<float> dist(-1.f, 1.f);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quartile_range(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return v[(3 * n) / 4] - v[n / 4];
}

double time_forward_ms(Model<float>& model, const Tensor32& clips) {
    Tape<float> tape(/*grad_enabled=*/false);
    auto input = make_node<float>(clips);
    auto t0 = clock::now();
    auto out = model.forward(tape, input, false);
    auto t1 = clock::now();
    (void)out;
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

LatencyStats bench_latency(Model<float>& model, int batch, int warmup, int iters) {
    if (iters < 3) throw ContractError("bench requires at least 3 iterations");
    Tensor32 clips = random_clips(model.spec, batch, 7);
    for (int i = 0; i < warmup; ++i) time_forward_ms(model, clips);
    LatencyStats st;
    st.iters = iters;
    for (int i = 0; i < iters; ++i) st.samples_ms.push_back(time_forward_ms(model, clips));
    st.median_ms = median(st.samples_ms);
    st.iqr_ms = quartile_range(st.samples_ms);
    return st;
}

ThroughputStats bench_throughput(Model<float>& model, int batch, int iters,
                                 int warmup) {
    if (iters < 3) throw ContractError("bench requires at least 3 iterations");
    Tensor32 clips = random_clips(model.spec, batch, 11);
    for (int i = 0; i < warmup; ++i) time_forward_ms(model, clips);
    std::vector<double> samples;
    for (int i = 0; i < iters; ++i) samples.push_back(time_forward_ms(model, clips));
    ThroughputStats st;
    st.batch = batch;
    st.iters = iters;
    st.median_batch_ms = median(samples);
    st.clips_per_s = batch / (st.median_batch_ms / 1000.0);
    return st;
}

}  // namespace tei
