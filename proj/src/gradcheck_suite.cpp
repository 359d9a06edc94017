#include "tei/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "tei/backbone.hpp"
#include "tei/gradcheck.hpp"
#include "tei/modules.hpp"
#include "tei/ops.hpp"

namespace tei {

namespace {

Tensor64 randn(std::vector<int64_t> shape, std::mt19937& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor64 t(std::move(shape));
    for (auto& v : t.data) v = dist(rng);
    return t;
}

// Fixed random projection to a scalar so every output element influences
// the loss with a distinct coefficient.
NodePtr<double> weighted_sum(Tape<double>& tape, const NodePtr<double>& y,
                             uint32_t seed) {
    std::mt19937 rng(seed);
    auto w = make_node<double>(randn(y->value.shape, rng), false);
    return sum(tape, mul(tape, y, w));
}

using CheckFn = std::function<double(std::mt19937&)>;  // returns max rel err

double check_unary(std::mt19937& rng,
                   const std::function<NodePtr<double>(Tape<double>&, NodePtr<double>)>& op,
                   std::vector<int64_t> shape) {
    auto x = make_node<double>(randn(std::move(shape), rng), true);
    auto fwd = [&](Tape<double>& tape) {
        return weighted_sum(tape, op(tape, x), 99);
    };
    return grad_check(fwd, {x}).max_rel_err;
}

double check_gap(std::mt19937& rng) {
    return check_unary(rng, [](Tape<double>& t, NodePtr<double> x) { return gap_spatial(t, x); },
                       {2, 3, 4, 3, 2});
}

double check_channel_project(std::mt19937& rng) {
    auto x = make_node<double>(randn({2, 3, 5}, rng), true);
    auto w = make_node<double>(randn({4, 5}, rng), true);
    auto b = make_node<double>(randn({4}, rng), true);
    auto fwd = [&](Tape<double>& tape) {
        return weighted_sum(tape, channel_project(tape, x, w, b), 7);
    };
    return grad_check(fwd, {x, w, b}).max_rel_err;
}

double check_sigmoid(std::mt19937& rng) {
    return check_unary(rng, [](Tape<double>& t, NodePtr<double> x) { return sigmoid(t, x); },
                       {3, 4});
}

double check_relu(std::mt19937& rng) {
    // shift away from the kink, where finite differences are undefined
    auto x = make_node<double>(randn({3, 4}, rng), true);
    for (auto& v : x->value.data)
        if (std::abs(v) < 0.05) v += 0.1;
    auto fwd = [&](Tape<double>& tape) { return weighted_sum(tape, relu(tape, x), 3); };
    return grad_check(fwd, {x}).max_rel_err;
}

double check_binary(std::mt19937& rng,
                    const std::function<NodePtr<double>(Tape<double>&, NodePtr<double>,
                                                        NodePtr<double>)>& op) {
    auto a = make_node<double>(randn({2, 3, 2}, rng), true);
    auto b = make_node<double>(randn({2, 3, 2}, rng), true);
    auto fwd = [&](Tape<double>& tape) { return weighted_sum(tape, op(tape, a, b), 5); };
    return grad_check(fwd, {a, b}).max_rel_err;
}

double check_mul_broadcast(std::mt19937& rng) {
    auto x = make_node<double>(randn({2, 3, 4, 2, 2}, rng), true);
    auto s = make_node<double>(randn({2, 3, 4}, rng), true);
    auto fwd = [&](Tape<double>& tape) {
        return weighted_sum(tape, mul_broadcast_channel(tape, x, s), 5);
    };
    return grad_check(fwd, {x, s}).max_rel_err;
}

double check_conv2d(std::mt19937& rng) {
    auto x = make_node<double>(randn({2, 3, 5, 5}, rng), true);
    auto k = make_node<double>(randn({4, 3, 3, 3}, rng), true);
    auto fwd = [&](Tape<double>& tape) {
        return weighted_sum(tape, conv2d(tape, x, k, 2, 1), 13);
    };
    return grad_check(fwd, {x, k}).max_rel_err;
}

double check_batch_norm(std::mt19937& rng) {
    auto x = make_node<double>(randn({4, 3, 3, 3}, rng), true);
    auto gamma = make_node<double>(randn({3}, rng), true);
    auto beta = make_node<double>(randn({3}, rng), true);
    auto fwd = [&](Tape<double>& tape) {
        auto state = std::make_shared<BatchNormState<double>>(3);
        return weighted_sum(tape, batch_norm_2d(tape, x, gamma, beta, state, true), 17);
    };
    return grad_check(fwd, {x, gamma, beta}).max_rel_err;
}

double check_mem(std::mt19937& rng) {
    ParamStore<double> store;
    auto mem = make_mem<double>(store, "mem", 6, 2, rng);
    auto x = make_node<double>(randn({2, 4, 6, 3, 2}, rng), true);
    std::vector<NodePtr<double>> wrt{x};
    for (auto& p : store.all()) {
        // pull biases off zero so the check exercises them
        for (auto& v : p.node->value.data)
            if (v == 0.0) v = 0.05;
        wrt.push_back(p.node);
    }
    auto fwd = [&](Tape<double>& tape) {
        return weighted_sum(tape, mem_forward(tape, mem, x), 23);
    };
    return grad_check(fwd, wrt).max_rel_err;
}

double check_tim(std::mt19937& rng) {
    ParamStore<double> store;
    auto tim = make_tim<double>(store, "tim", 5, 3);
    for (auto& v : tim.v->value.data) v = randn({1}, rng).data[0];
    auto x = make_node<double>(randn({2, 4, 5, 2, 2}, rng), true);
    auto fwd = [&](Tape<double>& tape) {
        return weighted_sum(tape, tim_forward(tape, tim, x), 29);
    };
    return grad_check(fwd, {x, tim.v}).max_rel_err;
}

// true when no ReLU input sits close enough to zero for the finite
// difference step to cross the kink
bool kink_free(const std::function<NodePtr<double>(Tape<double>&)>& fwd,
               double margin = 5e-3) {
    detail::ReluKinkTracker::reset();
    Tape<double> tape(/*grad_enabled=*/false);
    fwd(tape);
    detail::ReluKinkTracker::stop();
    return detail::ReluKinkTracker::min_abs > margin;
}

double check_se(std::mt19937& rng) {
    for (;;) {
        ParamStore<double> store;
        auto se = make_se<double>(store, "se", 6, 2, rng);
        auto x = make_node<double>(randn({2, 3, 6, 2, 2}, rng), true);
        std::vector<NodePtr<double>> wrt{x};
        for (auto& p : store.all()) {
            for (auto& v : p.node->value.data)
                if (v == 0.0) v = 0.05;
            wrt.push_back(p.node);
        }
        auto fwd = [&](Tape<double>& tape) {
            return weighted_sum(tape, se_forward(tape, se, x), 31);
        };
        if (!kink_free(fwd)) continue;
        return grad_check(fwd, wrt).max_rel_err;
    }
}

double check_cross_entropy(std::mt19937& rng) {
    auto logits = make_node<double>(randn({4, 3}, rng), true);
    std::vector<int> labels{0, 2, 1, 2};
    auto fwd = [&](Tape<double>& tape) { return cross_entropy(tape, logits, labels); };
    return grad_check(fwd, {logits}).max_rel_err;
}

double check_network(std::mt19937& rng) {
    NetworkSpec spec;
    spec.stages = {{1, 4}};
    spec.spatial = 4;
    spec.frames = 4;
    spec.num_classes = 3;
    spec.insertion = {0};
    spec.variant = Variant::mem_tim;
    spec.reduction = 2;
    std::vector<int> labels{0, 2};
    for (;;) {
        auto model = build_network<double>(spec, rng());
        auto clips = make_node<double>(randn({2, 4, 3, 4, 4}, rng, 0.5), true);
        std::vector<NodePtr<double>> wrt{clips};
        for (auto& p : model->store.all()) wrt.push_back(p.node);
        auto fwd = [&](Tape<double>& tape) {
            auto logits = model->forward(tape, clips, true);
            return cross_entropy(tape, logits, labels);
        };
        if (!kink_free(fwd)) continue;
        return grad_check(fwd, wrt).max_rel_err;
    }
}

struct NamedCheck {
    const char* name;
    CheckFn fn;
};

const std::vector<NamedCheck>& checks() {
    static const std::vector<NamedCheck> table = {
        {"gap_spatial", check_gap},
        {"channel_project", check_channel_project},
        {"sigmoid", check_sigmoid},
        {"relu", check_relu},
        {"add", [](std::mt19937& r) {
             return check_binary(r, [](Tape<double>& t, NodePtr<double> a, NodePtr<double> b) {
                 return add(t, a, b);
             });
         }},
        {"sub", [](std::mt19937& r) {
             return check_binary(r, [](Tape<double>& t, NodePtr<double> a, NodePtr<double> b) {
                 return sub(t, a, b);
             });
         }},
        {"mul", [](std::mt19937& r) {
             return check_binary(r, [](Tape<double>& t, NodePtr<double> a, NodePtr<double> b) {
                 return mul(t, a, b);
             });
         }},
        {"mul_broadcast", check_mul_broadcast},
        {"conv2d", check_conv2d},
        {"batch_norm", check_batch_norm},
        {"mem", check_mem},
        {"tim", check_tim},
        {"se", check_se},
        {"cross_entropy", check_cross_entropy},
        {"network", check_network},
    };
    return table;
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
    std::vector<std::string> names;
    for (const auto& c : checks()) names.push_back(c.name);
    return names;
}

std::vector<OpCheck> run_gradcheck_suite(const std::string& op_filter, int seeds,
                                         double tol) {
    std::vector<OpCheck> results;
    bool matched = false;
    for (const auto& c : checks()) {
        if (op_filter != "all" && op_filter != c.name) continue;
        matched = true;
        OpCheck r;
        r.name = c.name;
        for (int s = 0; s < seeds; ++s) {
            std::mt19937 rng(static_cast<uint32_t>(1000 + 77 * s));
            r.max_rel_err = std::max(r.max_rel_err, c.fn(rng));
        }
        r.pass = r.max_rel_err < tol;
        results.push_back(r);
    }
    if (!matched) throw ContractError("unknown gradcheck op '" + op_filter + "'");
    return results;
}

}  // namespace tei
