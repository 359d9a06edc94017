#include <doctest.h>

#include <cmath>
#include <random>

#include "tei/backbone.hpp"
#include "tei/gradcheck.hpp"

using namespace tei;

namespace {

NetworkSpec tiny_spec(Variant v) {
    NetworkSpec spec;
    spec.stages = {{1, 8}, {1, 16}};
    spec.spatial = 8;
    spec.frames = 4;
    spec.num_classes = 4;
    spec.variant = v;
    spec.insertion = {0, 1};
    spec.reduction = 4;
    return spec;
}

Tensor32 random_clips(int64_t n, int64_t t, int64_t s, uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist(0.f, 1.f);
    Tensor32 x({n, t, 3, s, s});
    for (auto& v : x.data) v = dist(rng);
    return x;
}

Tensor32 permute_time(const Tensor32& clips, const std::vector<int64_t>& perm) {
    Tensor32 out(clips.shape);
    int64_t n = clips.shape[0], t = clips.shape[1];
    int64_t per = clips.numel() / (n * t);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < t; ++j)
            std::copy(clips.data.begin() + (i * t + perm[static_cast<size_t>(j)]) * per,
                      clips.data.begin() + (i * t + perm[static_cast<size_t>(j)] + 1) * per,
                      out.data.begin() + (i * t + j) * per);
    return out;
}

SyntheticVideoConfig tiny_data_config() {
    SyntheticVideoConfig cfg;
    cfg.raw_frames = 8;
    cfg.spatial = 8;
    cfg.sprite_size = 3.0;
    cfg.speed = 0.5;
    return cfg;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace

TEST_CASE("spec validation") {
    NetworkSpec spec = tiny_spec(Variant::none);
    CHECK_NOTHROW(validate_network_spec(spec));
    spec.stages = {{1, 16}, {1, 8}};  // widths must strictly increase
    CHECK_THROWS_AS(validate_network_spec(spec), ContractError);
    spec = tiny_spec(Variant::none);
    spec.insertion = {5};
    CHECK_THROWS_AS(validate_network_spec(spec), ContractError);
    spec = tiny_spec(Variant::none);
    spec.stages[0].blocks = 0;
    CHECK_THROWS_AS(validate_network_spec(spec), ContractError);
}

TEST_CASE("default mini spec builds and runs forward") {
    NetworkSpec spec;  // 4 stages, 16/32/64/128, 2 blocks each
    auto model = build_network<float>(spec, 7);
    Tape<float> tape(false);
    auto clips = make_node<float>(random_clips(2, 8, 32, 1));
    auto logits = model->forward(tape, clips, false);
    CHECK(logits->value.shape == std::vector<int64_t>{2, 4});
    for (float v : logits->value.data) CHECK(std::isfinite(v));
}

TEST_CASE("construction is seed deterministic") {
    auto spec = tiny_spec(Variant::mem_tim);
    auto a = build_network<float>(spec, 11);
    auto b = build_network<float>(spec, 11);
    auto c = build_network<float>(spec, 12);
    REQUIRE(a->store.size() == b->store.size());
    bool any_differs_from_c = false;
    for (size_t i = 0; i < a->store.size(); ++i) {
        CHECK(a->store.all()[i].node->value.data == b->store.all()[i].node->value.data);
        if (a->store.all()[i].node->value.data != c->store.all()[i].node->value.data)
            any_differs_from_c = true;
    }
    CHECK(any_differs_from_c);
}

TEST_CASE("every variant preserves shapes end to end") {
    for (Variant v : {Variant::none, Variant::tsm, Variant::se_tim, Variant::mem_only,
                      Variant::tim_only, Variant::mem_tim}) {
        auto model = build_network<float>(tiny_spec(v), 3);
        Tape<float> tape(false);
        auto logits =
            model->forward(tape, make_node<float>(random_clips(2, 4, 8, 2)), false);
        CHECK(logits->value.shape == std::vector<int64_t>{2, 4});
    }
}

TEST_CASE("eval forward is bit-deterministic and row-wise independent") {
    auto model = build_network<float>(tiny_spec(Variant::mem_tim), 5);
    Tensor32 clips = random_clips(1, 4, 8, 3);
    // batch of identical clips
    Tensor32 batch({3, 4, 3, 8, 8});
    for (int64_t i = 0; i < 3; ++i)
        std::copy(clips.data.begin(), clips.data.end(),
                  batch.data.begin() + i * clips.numel());
    Tape<float> t1(false), t2(false);
    auto l1 = model->forward(t1, make_node<float>(batch), false);
    auto l2 = model->forward(t2, make_node<float>(batch), false);
    CHECK(l1->value.data == l2->value.data);
    for (int64_t i = 1; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j)
            CHECK(l1->value.at({i, j}) == l1->value.at({0, j}));
}

TEST_CASE("TSN variant ignores frame order") {
    auto spec = tiny_spec(Variant::none);
    spec.insertion.clear();
    auto model = build_network<float>(spec, 9);
    Tensor32 clips = random_clips(2, 4, 8, 4);
    Tensor32 reversed = permute_time(clips, {3, 2, 1, 0});
    Tensor32 shuffled = permute_time(clips, {2, 0, 3, 1});

    Tape<float> t1(false), t2(false), t3(false);
    auto a = model->forward(t1, make_node<float>(clips), false);
    auto b = model->forward(t2, make_node<float>(reversed), false);
    auto c = model->forward(t3, make_node<float>(shuffled), false);
    CHECK(max_abs_diff(a->value.data, b->value.data) < 1e-5);
    CHECK(max_abs_diff(a->value.data, c->value.data) < 1e-5);
}

TEST_CASE("identity-initialized TIM leaves initial logits unchanged") {
    auto none_model = build_network<float>(tiny_spec(Variant::none), 13);
    auto tim_model = build_network<float>(tiny_spec(Variant::tim_only), 13);
    Tensor32 clips = random_clips(2, 4, 8, 5);
    Tape<float> t1(false), t2(false);
    auto a = none_model->forward(t1, make_node<float>(clips), false);
    auto b = tim_model->forward(t2, make_node<float>(clips), false);
    CHECK(a->value.data == b->value.data);
}

TEST_CASE("asymmetric temporal kernels react to time reversal") {
    auto model = build_network<float>(tiny_spec(Variant::tim_only), 15);
    // make the first block's kernel a pure backward shift
    auto& v = model->store.find("stage0.block0.tim.v").node->value;
    for (int64_t c = 0; c < v.shape[0]; ++c) {
        v.at({c, 0}) = 1.0f;
        v.at({c, 1}) = 0.0f;
        v.at({c, 2}) = 0.0f;
    }
    Tensor32 clips = random_clips(1, 4, 8, 6);
    Tensor32 reversed = permute_time(clips, {3, 2, 1, 0});
    Tape<float> t1(false), t2(false);
    auto a = model->forward(t1, make_node<float>(clips), false);
    auto b = model->forward(t2, make_node<float>(reversed), false);
    CHECK(max_abs_diff(a->value.data, b->value.data) > 1e-3);
}

TEST_CASE("cross_entropy") {
    SUBCASE("uniform logits give ln k") {
        Tape<float> tape;
        auto logits = make_node<float>(Tensor32::full({2, 5}, 0.37f));
        auto loss = cross_entropy(tape, logits, {0, 3});
        CHECK(loss->value.data[0] == doctest::Approx(std::log(5.0)).epsilon(1e-6));
    }
    SUBCASE("a +20 margin saturates to ~zero loss") {
        Tensor32 t({1, 3}, {20.0f, 0.0f, 0.0f});
        Tape<float> tape;
        auto loss = cross_entropy(tape, make_node<float>(t), {0});
        CHECK(loss->value.data[0] < 1e-8);
    }
    SUBCASE("out-of-range labels rejected") {
        Tape<float> tape;
        auto logits = make_node<float>(Tensor32::full({2, 3}, 0.f));
        CHECK_THROWS_AS(cross_entropy(tape, logits, {0, 3}), ContractError);
        CHECK_THROWS_AS(cross_entropy(tape, logits, {-1, 0}), ContractError);
    }
    SUBCASE("finite differences") {
        std::mt19937 rng(40);
        std::normal_distribution<double> dist(0.0, 1.0);
        Tensor64 t({3, 4});
        for (auto& v : t.data) v = dist(rng);
        auto logits = make_node<double>(t, true);
        auto fwd = [&](Tape<double>& tape) {
            return cross_entropy(tape, logits, {1, 0, 3});
        };
        auto res = grad_check(fwd, {logits});
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("training with lr=0 freezes parameters and the loss") {
    auto cfg = tiny_data_config();
    auto data = generate_dataset(cfg, 2, 21);
    NormStats stats = compute_norm_stats(data);

    NetworkSpec spec = tiny_spec(Variant::none);
    spec.frames = cfg.raw_frames;  // T = T_raw so frame sampling is the identity
    auto model = build_network<float>(spec, 17);
    std::vector<std::vector<float>> before;
    for (const auto& p : model->store.all()) before.push_back(p.node->value.data);

    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = static_cast<int>(data.videos.size());
    tc.lr = 0.0;
    auto log = train(*model, data, data, tc, stats);

    for (size_t i = 0; i < before.size(); ++i)
        CHECK(model->store.all()[i].node->value.data == before[i]);
    REQUIRE(log.size() == 3);
    // one full-set batch per epoch: shuffling only reorders the mean
    CHECK(log[1].train_loss == doctest::Approx(log[0].train_loss).epsilon(1e-5));
    CHECK(log[2].train_loss == doctest::Approx(log[0].train_loss).epsilon(1e-5));
}

TEST_CASE("a single sample is memorized within 50 epochs") {
    auto cfg = tiny_data_config();
    auto data = generate_dataset(cfg, 1, 33);
    data.videos.resize(1);

    NormStats stats = compute_norm_stats(data);
    NetworkSpec spec = tiny_spec(Variant::none);
    auto model = build_network<float>(spec, 19);
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 1;
    auto log = train(*model, data, data, tc, stats);
    CHECK(log.back().train_acc == 1.0);
}

TEST_CASE("evaluation accuracy matches an independent argmax tally") {
    auto cfg = tiny_data_config();
    auto data = generate_dataset(cfg, 5, 44);
    NormStats stats = compute_norm_stats(data);
    NetworkSpec spec = tiny_spec(Variant::tim_only);
    auto model = build_network<float>(spec, 23);

    auto res = evaluate(*model, data, stats);

    // independent tally: forward each clip alone and count argmax hits
    int correct = 0;
    std::vector<int> per_class_hits(4, 0), per_class_total(4, 0);
    for (const auto& video : data.videos) {
        Tensor32 clip = uniform_sample_frames(video.frames, spec.frames, false, 0);
        Tensor32 batch({1, spec.frames, 3, 8, 8});
        int64_t hw = 64;
        for (int64_t t = 0; t < spec.frames; ++t)
            for (int c = 0; c < 3; ++c)
                for (int64_t j = 0; j < hw; ++j)
                    batch.data[static_cast<size_t>((t * 3 + c) * hw + j)] =
                        (clip.data[static_cast<size_t>((t * 3 + c) * hw + j)] -
                         stats.mean[c]) /
                        stats.stdev[c];
        Tape<float> tape(false);
        auto logits = model->forward(tape, make_node<float>(batch), false);
        int best = 0;
        for (int j = 1; j < 4; ++j)
            if (logits->value.data[static_cast<size_t>(j)] >
                logits->value.data[static_cast<size_t>(best)])
                best = j;
        ++per_class_total[static_cast<size_t>(video.label)];
        if (best == video.label) {
            ++correct;
            ++per_class_hits[static_cast<size_t>(video.label)];
        }
    }
    CHECK(res.accuracy ==
          doctest::Approx(static_cast<double>(correct) / 20.0).epsilon(1e-12));
    for (int c = 0; c < 4; ++c)
        CHECK(res.per_class[static_cast<size_t>(c)] ==
              doctest::Approx(per_class_hits[static_cast<size_t>(c)] / 5.0)
                  .epsilon(1e-12));
}

TEST_CASE("random weights score near chance on a balanced set") {
    auto cfg = tiny_data_config();
    auto data = generate_dataset(cfg, 10, 55);  // 40 clips, 4 classes
    NormStats stats = compute_norm_stats(data);
    auto model = build_network<float>(tiny_spec(Variant::none), 29);
    auto res = evaluate(*model, data, stats);
    double sigma = std::sqrt(0.25 * 0.75 / 40.0);
    CHECK(res.accuracy <= 0.25 + 3 * sigma + 1e-12);
    // a degenerate always-one-class predictor still scores exactly 1/k here,
    // so only the upper tail is a real constraint
    CHECK(res.accuracy >= 0.0);
}

TEST_CASE("empty datasets are rejected") {
    auto model = build_network<float>(tiny_spec(Variant::none), 31);
    ClipDataset empty;
    empty.num_classes = 4;
    NormStats stats;
    CHECK_THROWS_AS(evaluate(*model, empty, stats), ContractError);
    TrainConfig tc;
    CHECK_THROWS_AS(train(*model, empty, empty, tc, stats), ContractError);
}

TEST_CASE("training log serializes as CSV") {
    std::vector<EpochLog> log{{0, 0.01, 1.5, 0.25, 0.3}, {1, 0.001, 0.7, 0.5, 0.6}};
    auto csv = format_log_csv(log);
    CHECK(csv.find("epoch,lr,train_loss,train_acc,eval_acc") == 0);
    CHECK(csv.find("0,0.01,1.5,0.25,0.3") != std::string::npos);
    CHECK(csv.find("1,0.001,0.7,0.5,0.6") != std::string::npos);
}
