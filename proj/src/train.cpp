#include "tei/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace tei {

Variant variant_from_string(const std::string& s) {
    if (s == "tsn" || s == "none") return Variant::none;
    if (s == "tsm") return Variant::tsm;
    if (s == "se+tim") return Variant::se_tim;
    if (s == "mem") return Variant::mem_only;
    if (s == "tim") return Variant::tim_only;
    if (s == "mem+tim") return Variant::mem_tim;
    throw ContractError("unknown variant '" + s +
                        "', valid: tsn, tsm, se+tim, mem, tim, mem+tim");
}

std::string variant_to_string(Variant v) {
    switch (v) {
        case Variant::none: return "tsn";
        case Variant::tsm: return "tsm";
        case Variant::se_tim: return "se+tim";
        case Variant::mem_only: return "mem";
        case Variant::tim_only: return "tim";
        case Variant::mem_tim: return "mem+tim";
    }
    return "?";
}

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9e3779b97f4a7c15ULL + b + 0x7f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stack sampled, normalized clips into a [B,T,3,H,W] batch tensor.
Tensor32 assemble_batch(const ClipDataset& ds, const std::vector<size_t>& indices,
                        int64_t frames, bool train_mode, uint64_t seed_base,
                        const NormStats& stats, std::vector<int>& labels) {
    int64_t b = static_cast<int64_t>(indices.size());
    const auto& first = ds.videos[indices[0]].frames;
    int64_t h = first.shape[2], w = first.shape[3];
    Tensor32 batch({b, frames, 3, h, w});
    labels.resize(static_cast<size_t>(b));
    int64_t clip_sz = frames * 3 * h * w;
    for (int64_t i = 0; i < b; ++i) {
        const auto& video = ds.videos[indices[static_cast<size_t>(i)]];
        labels[static_cast<size_t>(i)] = video.label;
        Tensor32 clip = uniform_sample_frames(
            video.frames, frames, train_mode,
            mix(seed_base, indices[static_cast<size_t>(i)]));
        float* dst = batch.data.data() + i * clip_sz;
        int64_t hw = h * w;
        for (int64_t t = 0; t < frames; ++t)
            for (int c = 0; c < 3; ++c) {
                const float* src = clip.data.data() + (t * 3 + c) * hw;
                float* d = dst + (t * 3 + c) * hw;
                float mu = stats.mean[c], inv = 1.0f / stats.stdev[c];
                for (int64_t j = 0; j < hw; ++j) d[j] = (src[j] - mu) * inv;
            }
    }
    return batch;
}

int count_correct(const Tensor<float>& logits, const std::vector<int>& labels) {
    int64_t n = logits.shape[0], k = logits.shape[1];
    int correct = 0;
    for (int64_t i = 0; i < n; ++i) {
        const float* row = logits.data.data() + i * k;
        int64_t best = 0;
        for (int64_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[static_cast<size_t>(i)]) ++correct;
    }
    return correct;
}

}  // namespace

EvalResult evaluate(Model<float>& model, const ClipDataset& dataset,
                    const NormStats& stats) {
    if (dataset.videos.empty()) throw ContractError("evaluate: empty dataset");
    int k = dataset.num_classes;
    std::vector<int> correct_per_class(static_cast<size_t>(k), 0);
    std::vector<int> total_per_class(static_cast<size_t>(k), 0);
    size_t total = dataset.videos.size();
    size_t batch = 16;
    int correct = 0;
    for (size_t start = 0; start < total; start += batch) {
        std::vector<size_t> indices;
        for (size_t i = start; i < std::min(start + batch, total); ++i)
            indices.push_back(i);
        std::vector<int> labels;
        Tensor32 clips = assemble_batch(dataset, indices, model.spec.frames,
                                        /*train_mode=*/false, 0, stats, labels);
        Tape<float> tape(/*grad_enabled=*/false);
        auto logits = model.forward(tape, make_node<float>(std::move(clips)), false);
        int64_t n = logits->value.shape[0];
        for (int64_t i = 0; i < n; ++i) {
            const float* row = logits->value.data.data() + i * k;
            int64_t best = 0;
            for (int64_t j = 1; j < k; ++j)
                if (row[j] > row[best]) best = j;
            int lab = labels[static_cast<size_t>(i)];
            ++total_per_class[static_cast<size_t>(lab)];
            if (best == lab) {
                ++correct;
                ++correct_per_class[static_cast<size_t>(lab)];
            }
        }
    }
    EvalResult res;
    res.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    for (int c = 0; c < k; ++c)
        res.per_class.push_back(total_per_class[static_cast<size_t>(c)] == 0
                                    ? 0.0
                                    : static_cast<double>(correct_per_class[static_cast<size_t>(c)]) /
                                          total_per_class[static_cast<size_t>(c)]);
    return res;
}

std::vector<EpochLog> train(Model<float>& model, const ClipDataset& train_set,
                            const ClipDataset& eval_set, const TrainConfig& cfg,
                            const NormStats& stats) {
    if (train_set.videos.empty()) throw ContractError("train: empty dataset");
    std::vector<EpochLog> log;
    size_t n = train_set.videos.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        for (double frac : cfg.lr_drop_fracs)
            if (epoch >= static_cast<int>(frac * cfg.epochs)) lr *= cfg.lr_decay;

        std::mt19937_64 shuffle_rng(mix(cfg.seed, 0xA11CE0000ULL + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0;
        int correct = 0;
        size_t seen = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
            std::vector<size_t> indices(order.begin() + start,
                                        order.begin() + std::min(n, start + cfg.batch_size));
            std::vector<int> labels;
            Tensor32 clips = assemble_batch(train_set, indices, model.spec.frames,
                                            /*train_mode=*/true,
                                            mix(cfg.seed, 0xF0A3ULL + epoch), stats, labels);
            Tape<float> tape;
            auto input = make_node<float>(std::move(clips));
            auto logits = model.forward(tape, input, true);
            auto loss = cross_entropy(tape, logits, labels);
            model.store.zero_grad();
            tape.backward(loss);
            model.store.sgd_step(static_cast<float>(lr),
                                 static_cast<float>(cfg.momentum),
                                 static_cast<float>(cfg.weight_decay));
            loss_sum += loss->value.data[0] * static_cast<double>(indices.size());
            correct += count_correct(logits->value, labels);
            seen += indices.size();
        }

        EpochLog e;
        e.epoch = epoch;
        e.lr = lr;
        e.train_loss = loss_sum / static_cast<double>(seen);
        e.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        e.eval_acc = eval_set.videos.empty()
                         ? 0.0
                         : evaluate(model, eval_set, stats).accuracy;
        log.push_back(e);
    }
    return log;
}

std::string format_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << "epoch,lr,train_loss,train_acc,eval_acc\n";
    for (const auto& e : log) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.6g,%.9g,%.9g,%.9g\n", e.epoch, e.lr,
                      e.train_loss, e.train_acc, e.eval_acc);
        os << buf;
    }
    return os.str();
}

}  // namespace tei
