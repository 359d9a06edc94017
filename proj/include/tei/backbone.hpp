#pragma once

#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tei/modules.hpp"
#include "tei/ops.hpp"
#include "tei/synthetic.hpp"
#include "tei/tape.hpp"

namespace tei {

enum class Variant { none, tsm, se_tim, mem_only, tim_only, mem_tim };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct StageSpec {
    int blocks = 1;
    int64_t channels = 16;
};

struct NetworkSpec {
    std::vector<StageSpec> stages{{2, 16}, {2, 32}, {2, 64}, {2, 128}};
    int64_t spatial = 32;
    int64_t frames = 8;
    int num_classes = 4;
    std::set<int> insertion;  // stage indices receiving temporal blocks
    Variant variant = Variant::none;
    int reduction = 8;
    ShiftSpec shift;
};

void validate_network_spec(const NetworkSpec& spec);

template <class T>
struct ConvBnLayer {
    NodePtr<T> kern;
    NodePtr<T> gamma, beta;
    std::shared_ptr<BatchNormState<T>> bn;
    int64_t stride = 1;
    int64_t pad = 1;
};

template <class T>
struct ResBlock {
    std::optional<MemModule<T>> mem;
    std::optional<TimModule<T>> tim;
    std::optional<SeModule<T>> se;
    bool use_tsm = false;
    ConvBnLayer<T> conv1, conv2;
    std::optional<ConvBnLayer<T>> down;
};

// Mini residual video network: stem conv-BN-ReLU, basic two-conv blocks
// with optional temporal module on the block input, average consensus
// over (T,H,W), linear classifier.
template <class T>
struct Model {
    NetworkSpec spec;
    ParamStore<T> store;
    ConvBnLayer<T> stem;
    std::vector<ResBlock<T>> blocks;
    NodePtr<T> head_w, head_b;

    Model() = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    NodePtr<T> forward(Tape<T>& tape, const NodePtr<T>& clips, bool training);
};

template <class T>
std::unique_ptr<Model<T>> build_network(const NetworkSpec& spec, uint64_t seed);

// ---- training ----

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<double> lr_drop_fracs{0.6, 0.85};
    double lr_decay = 0.1;
    uint64_t seed = 1;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double train_acc = 0;
    double eval_acc = 0;
};

std::vector<EpochLog> train(Model<float>& model, const ClipDataset& train_set,
                            const ClipDataset& eval_set, const TrainConfig& cfg,
                            const NormStats& stats);

struct EvalResult {
    double accuracy = 0;
    std::vector<double> per_class;
};

EvalResult evaluate(Model<float>& model, const ClipDataset& dataset,
                    const NormStats& stats);

std::string format_log_csv(const std::vector<EpochLog>& log);

// ---- implementation ----

namespace detail {

template <class T>
ConvBnLayer<T> make_conv_bn(ParamStore<T>& store, const std::string& prefix,
                            int64_t cin, int64_t cout, int64_t k, int64_t stride,
                            std::mt19937& rng) {
    ConvBnLayer<T> l;
    l.kern = store.add(prefix + ".kern",
                       uniform_fan_in<T>({cout, cin, k, k}, cin * k * k, rng));
    l.gamma = store.add(prefix + ".gamma", Tensor<T>::full({cout}, T(1)));
    l.beta = store.add(prefix + ".beta", Tensor<T>::zeros({cout}));
    l.bn = std::make_shared<BatchNormState<T>>(cout);
    l.stride = stride;
    l.pad = (k - 1) / 2;
    return l;
}

template <class T>
NodePtr<T> apply_conv_bn(Tape<T>& tape, const ConvBnLayer<T>& l, const NodePtr<T>& x,
                         bool training) {
    auto h = conv2d(tape, x, l.kern, l.stride, l.pad);
    return batch_norm_2d(tape, h, l.gamma, l.beta, l.bn, training);
}

}  // namespace detail

inline void validate_network_spec(const NetworkSpec& spec) {
    if (spec.stages.empty()) throw ContractError("network spec: no stages");
    int64_t prev = 0;
    for (const auto& st : spec.stages) {
        if (st.blocks < 1) throw ContractError("network spec: stage needs >= 1 block");
        if (st.channels <= prev)
            throw ContractError("network spec: channel widths must strictly increase");
        prev = st.channels;
    }
    for (int idx : spec.insertion)
        if (idx < 0 || idx >= static_cast<int>(spec.stages.size()))
            throw ContractError("network spec: insertion stage index out of range");
    if (spec.frames < 1 || spec.spatial < 1 || spec.num_classes < 2)
        throw ContractError("network spec: invalid frames/spatial/classes");
    validate_shift_spec(spec.shift);
}

template <class T>
std::unique_ptr<Model<T>> build_network(const NetworkSpec& spec, uint64_t seed) {
    validate_network_spec(spec);
    auto model = std::make_unique<Model<T>>();
    model->spec = spec;
    std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
    auto& store = model->store;

    model->stem = detail::make_conv_bn(store, "stem", 3, spec.stages[0].channels, 3, 1, rng);
    int64_t cin = spec.stages[0].channels;
    for (size_t si = 0; si < spec.stages.size(); ++si) {
        const auto& st = spec.stages[si];
        bool inserted = spec.insertion.count(static_cast<int>(si)) > 0;
        for (int bi = 0; bi < st.blocks; ++bi) {
            std::string prefix = "stage" + std::to_string(si) + ".block" + std::to_string(bi);
            ResBlock<T> block;
            int64_t stride = (si > 0 && bi == 0) ? 2 : 1;
            int64_t cout = st.channels;
            if (inserted && spec.variant != Variant::none) {
                switch (spec.variant) {
                    case Variant::tsm:
                        block.use_tsm = true;
                        break;
                    case Variant::se_tim:
                        block.se = make_se<T>(store, prefix + ".se", cin, spec.reduction, rng);
                        block.tim = make_tim<T>(store, prefix + ".tim", cin);
                        break;
                    case Variant::mem_only:
                        block.mem = make_mem<T>(store, prefix + ".mem", cin, spec.reduction, rng);
                        break;
                    case Variant::tim_only:
                        block.tim = make_tim<T>(store, prefix + ".tim", cin);
                        break;
                    case Variant::mem_tim:
                        block.mem = make_mem<T>(store, prefix + ".mem", cin, spec.reduction, rng);
                        block.tim = make_tim<T>(store, prefix + ".tim", cin);
                        break;
                    default:
                        break;
                }
            }
            block.conv1 = detail::make_conv_bn(store, prefix + ".conv1", cin, cout, 3, stride, rng);
            block.conv2 = detail::make_conv_bn(store, prefix + ".conv2", cout, cout, 3, 1, rng);
            if (stride != 1 || cin != cout)
                block.down = detail::make_conv_bn(store, prefix + ".down", cin, cout, 1, stride, rng);
            model->blocks.push_back(std::move(block));
            cin = cout;
        }
    }
    model->head_w = store.add("head.w", detail::uniform_fan_in<T>(
                                            {spec.num_classes, cin}, cin, rng));
    model->head_b = store.add("head.b", Tensor<T>::zeros({spec.num_classes}));
    return model;
}

template <class T>
NodePtr<T> Model<T>::forward(Tape<T>& tape, const NodePtr<T>& clips, bool training) {
    require_rank(clips->value.shape, 5, "model forward");
    int64_t n = clips->value.shape[0], t = clips->value.shape[1];
    if (t != spec.frames || clips->value.shape[2] != 3)
        throw ShapeError("model forward: clip shape " + shape_str(clips->value.shape) +
                         " does not match spec");
    auto fold = [&](const NodePtr<T>& x5) {
        auto s = x5->value.shape;
        return reshape(tape, x5, {n * t, s[2], s[3], s[4]});
    };
    auto unfold = [&](const NodePtr<T>& x4) {
        auto s = x4->value.shape;
        return reshape(tape, x4, {n, t, s[1], s[2], s[3]});
    };

    auto h = relu(tape, detail::apply_conv_bn(tape, stem, fold(clips), training));
    for (auto& block : blocks) {
        auto x = h;
        // temporal module sits on the residual branch input; the skip
        // connection bypasses it
        auto xb = x;
        if (block.mem || block.tim || block.se || block.use_tsm) {
            auto x5 = unfold(x);
            if (block.mem) x5 = mem_forward(tape, *block.mem, x5);
            if (block.se) x5 = se_forward(tape, *block.se, x5);
            if (block.tim) x5 = tim_forward(tape, *block.tim, x5);
            if (block.use_tsm) x5 = tsm_forward(tape, spec.shift, x5);
            xb = fold(x5);
        }
        auto branch = relu(tape, detail::apply_conv_bn(tape, block.conv1, xb, training));
        branch = detail::apply_conv_bn(tape, block.conv2, branch, training);
        auto skip = block.down ? detail::apply_conv_bn(tape, *block.down, x, training) : x;
        h = relu(tape, add(tape, branch, skip));
    }
    auto pooled = global_avg_pool_video(tape, unfold(h));  // [N,C]
    return linear(tape, pooled, head_w, head_b);
}

}  // namespace tei
