#include <doctest.h>

#include <cmath>
#include <random>

#include "tei/gradcheck.hpp"
#include "tei/modules.hpp"

using namespace tei;

namespace {

Tensor64 randn64(std::vector<int64_t> shape, uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor64 t(std::move(shape));
    for (auto& v : t.data) v = dist(rng);
    return t;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// X constant across time with the two reduction branches tied
void tie_branches(MemModule<double>& mem) {
    mem.w_phi->value = mem.w_theta->value;
    mem.b_phi->value = mem.b_theta->value;
    mem.b_psi->value.fill(0.0);
}

}  // namespace

TEST_CASE("MEM: tied weights on a static clip gate at one half") {
    ParamStore<double> store;
    std::mt19937 rng(1);
    auto mem = make_mem<double>(store, "mem", 3, 2, rng);
    tie_branches(mem);

    Tensor64 frame = randn64({1, 1, 3, 2, 2}, 2);
    Tensor64 x({1, 4, 3, 2, 2});
    for (int64_t t = 0; t < 4; ++t)
        std::copy(frame.data.begin(), frame.data.end(),
                  x.data.begin() + t * frame.data.size());

    Tape<double> tape;
    auto xn = make_node<double>(x);
    auto u = mem_forward(tape, mem, xn);
    CHECK(u->value.shape == xn->value.shape);
    size_t per_frame = frame.data.size();
    for (int64_t t = 0; t < 3; ++t)
        for (size_t i = 0; i < per_frame; ++i)
            CHECK(u->value.data[t * per_frame + i] ==
                  doctest::Approx(0.5 * frame.data[i]).epsilon(1e-12));
    // last frame is an exact bitwise copy
    for (size_t i = 0; i < per_frame; ++i)
        CHECK(u->value.data[3 * per_frame + i] == frame.data[i]);
}

TEST_CASE("MEM: static clip with tied branches gates at sigmoid(b_psi)") {
    ParamStore<double> store;
    std::mt19937 rng(3);
    auto mem = make_mem<double>(store, "mem", 4, 2, rng);
    tie_branches(mem);
    mem.b_psi->value = randn64({4}, 4);

    Tensor64 frame({1, 1, 4, 1, 1}, {1.5, -2.0, 0.5, 3.0});
    Tensor64 x({1, 3, 4, 1, 1});
    for (int64_t t = 0; t < 3; ++t)
        std::copy(frame.data.begin(), frame.data.end(), x.data.begin() + t * 4);

    Tape<double> tape;
    auto u = mem_forward(tape, mem, make_node<double>(x));
    for (int64_t t = 0; t < 2; ++t)
        for (int64_t c = 0; c < 4; ++c) {
            double gate = u->value.at({0, t, c, 0, 0}) / frame.data[static_cast<size_t>(c)];
            CHECK(gate == doctest::Approx(sig(mem.b_psi->value.data[static_cast<size_t>(c)]))
                              .epsilon(1e-12));
        }
}

TEST_CASE("MEM: gate values lie strictly inside (0,1)") {
    ParamStore<double> store;
    std::mt19937 rng(5);
    auto mem = make_mem<double>(store, "mem", 6, 3, rng);
    Tensor64 x = randn64({2, 4, 6, 2, 2}, 6);
    for (auto& v : x.data) v += (v >= 0 ? 1.0 : -1.0);  // keep entries away from zero

    Tape<double> tape;
    auto xn = make_node<double>(x);
    auto u = mem_forward(tape, mem, xn);
    int64_t per_frame = 6 * 4;
    for (int64_t in = 0; in < 2; ++in)
        for (int64_t t = 0; t < 3; ++t)
            for (int64_t i = 0; i < per_frame; ++i) {
                size_t idx = static_cast<size_t>(((in * 4 + t) * per_frame) + i);
                double gate = u->value.data[idx] / x.data[idx];
                CHECK(gate > 0.0);
                CHECK(gate < 1.0);
            }
}

TEST_CASE("MEM: C=64 at r=8 bottlenecks to 8 and preserves shape") {
    ParamStore<double> store;
    std::mt19937 rng(7);
    auto mem = make_mem<double>(store, "mem", 64, 8, rng);
    CHECK(mem.reduced == 8);
    CHECK(mem.w_theta->value.shape == std::vector<int64_t>{8, 64});
    CHECK(mem.w_psi->value.shape == std::vector<int64_t>{64, 8});

    Tape<double> tape;
    auto x = make_node<double>(randn64({1, 3, 64, 2, 2}, 8));
    auto u = mem_forward(tape, mem, x);
    CHECK(u->value.shape == x->value.shape);
}

TEST_CASE("MEM: scalar hand computation, N=1 T=2 C=2 H=W=1 r=1") {
    ParamStore<double> store;
    std::mt19937 rng(9);
    auto mem = make_mem<double>(store, "mem", 2, 1, rng);
    mem.w_theta->value = Tensor64({2, 2}, {0.3, -0.1, 0.2, 0.5});
    mem.b_theta->value = Tensor64({2}, {0.1, -0.2});
    mem.w_phi->value = Tensor64({2, 2}, {-0.4, 0.6, 0.1, -0.3});
    mem.b_phi->value = Tensor64({2}, {0.05, 0.15});
    mem.w_psi->value = Tensor64({2, 2}, {0.7, -0.2, -0.5, 0.4});
    mem.b_psi->value = Tensor64({2}, {0.0, 0.1});

    double x1[2] = {1.2, -0.7};
    double x2[2] = {-0.3, 0.9};
    Tensor64 x({1, 2, 2, 1, 1}, {x1[0], x1[1], x2[0], x2[1]});

    // plain-arithmetic oracle for the gate of frame 1
    double a0 = 0.3 * x1[0] + (-0.1) * x1[1] + 0.1;
    double a1 = 0.2 * x1[0] + 0.5 * x1[1] + (-0.2);
    double b0 = (-0.4) * x2[0] + 0.6 * x2[1] + 0.05;
    double b1 = 0.1 * x2[0] + (-0.3) * x2[1] + 0.15;
    double s0 = a0 - b0, s1 = a1 - b1;
    double g0 = sig(0.7 * s0 + (-0.2) * s1 + 0.0);
    double g1 = sig((-0.5) * s0 + 0.4 * s1 + 0.1);

    Tape<double> tape;
    auto u = mem_forward(tape, mem, make_node<double>(x));
    CHECK(u->value.data[0] == doctest::Approx(g0 * x1[0]).epsilon(1e-12));
    CHECK(u->value.data[1] == doctest::Approx(g1 * x1[1]).epsilon(1e-12));
    CHECK(u->value.data[2] == x2[0]);
    CHECK(u->value.data[3] == x2[1]);
}

TEST_CASE("MEM: single-frame clip rejected") {
    ParamStore<double> store;
    std::mt19937 rng(10);
    auto mem = make_mem<double>(store, "mem", 2, 1, rng);
    Tape<double> tape;
    auto x = make_node<double>(randn64({1, 1, 2, 2, 2}, 11));
    CHECK_THROWS_WITH_AS(mem_forward(tape, mem, x), "MEM requires at least two frames",
                         ContractError);
}

TEST_CASE("TIM: identity kernel reproduces input exactly") {
    ParamStore<double> store;
    auto tim = make_tim<double>(store, "tim", 5);
    Tape<double> tape;
    auto u = make_node<double>(randn64({2, 4, 5, 2, 2}, 12));
    auto y = tim_forward(tape, tim, u);
    CHECK(y->value.data == u->value.data);
}

TEST_CASE("TIM: one-hot [1,0,0] is a backward shift with zero fill") {
    ParamStore<double> store;
    auto tim = make_tim<double>(store, "tim", 2);
    for (int64_t c = 0; c < 2; ++c) {
        tim.v->value.at({c, 0}) = 1.0;
        tim.v->value.at({c, 1}) = 0.0;
    }
    Tape<double> tape;
    auto u = make_node<double>(randn64({1, 3, 2, 1, 1}, 13));
    auto y = tim_forward(tape, tim, u);
    for (int64_t c = 0; c < 2; ++c) {
        CHECK(y->value.at({0, 0, c, 0, 0}) == 0.0);
        CHECK(y->value.at({0, 1, c, 0, 0}) == u->value.at({0, 0, c, 0, 0}));
        CHECK(y->value.at({0, 2, c, 0, 0}) == u->value.at({0, 1, c, 0, 0}));
    }
}

TEST_CASE("TIM: brute-force oracle, U=[1,2,3] V=[0.5,1,-0.5]") {
    ParamStore<double> store;
    auto tim = make_tim<double>(store, "tim", 1);
    tim.v->value = Tensor64({1, 3}, {0.5, 1.0, -0.5});
    Tape<double> tape;
    auto u = make_node<double>(Tensor64({1, 3, 1, 1, 1}, {1, 2, 3}));
    auto y = tim_forward(tape, tim, u);
    CHECK(y->value.data[0] == doctest::Approx(0.0));
    CHECK(y->value.data[1] == doctest::Approx(1.0));
    CHECK(y->value.data[2] == doctest::Approx(4.0));
}

TEST_CASE("TIM: linear in U and channel independent") {
    ParamStore<double> store;
    auto tim = make_tim<double>(store, "tim", 3);
    tim.v->value = randn64({3, 3}, 14);
    double alpha = 1.3, beta = -0.4;
    Tensor64 ua = randn64({1, 5, 3, 2, 2}, 15);
    Tensor64 ub = randn64({1, 5, 3, 2, 2}, 16);

    auto run = [&](const Tensor64& t) {
        Tape<double> tape;
        return tim_forward(tape, tim, make_node<double>(t))->value;
    };
    Tensor64 mix(ua.shape);
    for (size_t i = 0; i < mix.data.size(); ++i)
        mix.data[i] = alpha * ua.data[i] + beta * ub.data[i];
    auto ya = run(ua), yb = run(ub), ym = run(mix);
    for (size_t i = 0; i < ym.data.size(); ++i)
        CHECK(ym.data[i] ==
              doctest::Approx(alpha * ya.data[i] + beta * yb.data[i]).epsilon(1e-12));

    // perturbing one channel leaves the others untouched
    Tensor64 up = ua;
    for (int64_t t = 0; t < 5; ++t)
        for (int64_t j = 0; j < 4; ++j) up.data[static_cast<size_t>((t * 3 + 1) * 4 + j)] += 7.0;
    auto yp = run(up);
    for (int64_t t = 0; t < 5; ++t)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t j = 0; j < 4; ++j) {
                size_t idx = static_cast<size_t>((t * 3 + c) * 4 + j);
                if (c == 1) continue;
                CHECK(yp.data[idx] == ya.data[idx]);
            }
}

TEST_CASE("parameter count accessors") {
    ParamStore<double> store;
    std::mt19937 rng(17);
    auto mem = make_mem<double>(store, "mem", 64, 8, rng);
    CHECK(mem.weight_count() == 2 * 64 * 8 + 8 * 64);
    CHECK(mem.bias_count() == 2 * 8 + 64);
    auto tim = make_tim<double>(store, "tim", 64);
    CHECK(tim.param_count() == 64 * 3);
    // reduced width never collapses to zero
    CHECK(reduced_channels(3, 8) == 1);
    CHECK(reduced_channels(64, 8) == 8);
}

TEST_CASE("TEI: composition is the literal two-step pipeline") {
    ParamStore<double> store;
    std::mt19937 rng(18);
    auto mem = make_mem<double>(store, "mem", 4, 2, rng);
    auto tim = make_tim<double>(store, "tim", 4);
    tim.v->value = randn64({4, 3}, 19);
    Tensor64 x = randn64({2, 3, 4, 2, 2}, 20);

    Tape<double> t1;
    auto y1 = tei_forward(t1, mem, tim, make_node<double>(x));
    Tape<double> t2;
    auto y2 = tim_forward(t2, tim, mem_forward(t2, mem, make_node<double>(x)));
    CHECK(y1->value.data == y2->value.data);
}

TEST_CASE("TEI: identity TIM plus tied static MEM halves all but the last frame") {
    ParamStore<double> store;
    std::mt19937 rng(21);
    auto mem = make_mem<double>(store, "mem", 3, 1, rng);
    tie_branches(mem);
    auto tim = make_tim<double>(store, "tim", 3);

    Tensor64 frame = randn64({1, 1, 3, 2, 2}, 22);
    Tensor64 x({1, 3, 3, 2, 2});
    for (int64_t t = 0; t < 3; ++t)
        std::copy(frame.data.begin(), frame.data.end(),
                  x.data.begin() + t * frame.data.size());
    Tape<double> tape;
    auto y = tei_forward(tape, mem, tim, make_node<double>(x));
    size_t pf = frame.data.size();
    for (int64_t t = 0; t < 2; ++t)
        for (size_t i = 0; i < pf; ++i)
            CHECK(y->value.data[t * pf + i] == doctest::Approx(0.5 * frame.data[i]));
    for (size_t i = 0; i < pf; ++i)
        CHECK(y->value.data[2 * pf + i] == doctest::Approx(frame.data[i]));
}

TEST_CASE("TEI: finite differences through both stages") {
    ParamStore<double> store;
    std::mt19937 rng(23);
    auto mem = make_mem<double>(store, "mem", 3, 2, rng);
    auto tim = make_tim<double>(store, "tim", 3);
    tim.v->value = randn64({3, 3}, 24);
    auto x = make_node<double>(randn64({1, 3, 3, 2, 2}, 25), true);

    std::vector<NodePtr<double>> wrt = {x, mem.w_theta, mem.w_phi, mem.w_psi,
                                        mem.b_theta, mem.b_phi, mem.b_psi, tim.v};
    Tensor64 proj = randn64({1, 3, 3, 2, 2}, 26);
    auto fwd = [&](Tape<double>& tape) {
        auto y = tei_forward(tape, mem, tim, x);
        return sum(tape, mul(tape, y, make_node<double>(proj)));
    };
    auto res = grad_check(fwd, wrt);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("SE: zero weights gate everything at one half") {
    ParamStore<double> store;
    std::mt19937 rng(27);
    auto se = make_se<double>(store, "se", 4, 2, rng);
    se.w_theta->value.fill(0.0);
    se.w_psi->value.fill(0.0);
    Tape<double> tape;
    auto x = make_node<double>(randn64({1, 3, 4, 2, 2}, 28));
    auto y = se_forward(tape, se, x);
    CHECK(y->value.shape == x->value.shape);
    for (size_t i = 0; i < y->value.data.size(); ++i)
        CHECK(y->value.data[i] == doctest::Approx(0.5 * x->value.data[i]));
}

TEST_CASE("SE: scalar oracle, C=2 r=1") {
    ParamStore<double> store;
    std::mt19937 rng(29);
    auto se = make_se<double>(store, "se", 2, 1, rng);
    se.w_theta->value = Tensor64({2, 2}, {0.4, -0.3, 0.6, 0.2});
    se.b_theta->value = Tensor64({2}, {0.1, -0.5});
    se.w_psi->value = Tensor64({2, 2}, {-0.2, 0.7, 0.3, -0.6});
    se.b_psi->value = Tensor64({2}, {0.05, -0.1});

    double x0 = 0.8, x1 = -1.4;  // single frame, H=W=1 so pooling is identity
    Tensor64 x({1, 1, 2, 1, 1}, {x0, x1});
    double h0 = std::max(0.0, 0.4 * x0 + (-0.3) * x1 + 0.1);
    double h1 = std::max(0.0, 0.6 * x0 + 0.2 * x1 + (-0.5));
    double g0 = sig((-0.2) * h0 + 0.7 * h1 + 0.05);
    double g1 = sig(0.3 * h0 + (-0.6) * h1 + (-0.1));

    Tape<double> tape;
    auto y = se_forward(tape, se, make_node<double>(x));
    CHECK(y->value.data[0] == doctest::Approx(g0 * x0).epsilon(1e-12));
    CHECK(y->value.data[1] == doctest::Approx(g1 * x1).epsilon(1e-12));
}

TEST_CASE("TSM: zero fractions are the identity") {
    Tape<double> tape;
    auto x = make_node<double>(randn64({2, 4, 6, 2, 2}, 30));
    auto y = tsm_forward(tape, ShiftSpec{0.0, 0.0}, x);
    CHECK(y->value.data == x->value.data);
}

TEST_CASE("TSM: quarter fractions on four channels") {
    Tape<double> tape;
    auto x = make_node<double>(randn64({1, 3, 4, 1, 1}, 31));
    auto y = tsm_forward(tape, ShiftSpec{0.25, 0.25}, x);
    for (int64_t t = 0; t < 3; ++t) {
        // channel 0 backward: value comes from t-1
        CHECK(y->value.at({0, t, 0, 0, 0}) ==
              (t == 0 ? 0.0 : x->value.at({0, t - 1, 0, 0, 0})));
        // channel 1 forward: value comes from t+1
        CHECK(y->value.at({0, t, 1, 0, 0}) ==
              (t == 2 ? 0.0 : x->value.at({0, t + 1, 1, 0, 0})));
        // channels 2,3 untouched
        CHECK(y->value.at({0, t, 2, 0, 0}) == x->value.at({0, t, 2, 0, 0}));
        CHECK(y->value.at({0, t, 3, 0, 0}) == x->value.at({0, t, 3, 0, 0}));
    }
}

TEST_CASE("TSM: invalid fractions rejected") {
    Tape<double> tape;
    auto x = make_node<double>(randn64({1, 2, 4, 1, 1}, 32));
    CHECK_THROWS_AS(tsm_forward(tape, ShiftSpec{0.75, 0.5}, x), ContractError);
    CHECK_THROWS_AS(tsm_forward(tape, ShiftSpec{-0.1, 0.0}, x), ContractError);
}

TEST_CASE("tim_from_shift_spec: kernel rows follow the partition") {
    SUBCASE("zero fractions give all-identity rows") {
        auto tim = tim_from_shift_spec<double>(ShiftSpec{0.0, 0.0}, 4);
        for (int64_t c = 0; c < 4; ++c) {
            CHECK(tim.v->value.at({c, 0}) == 0.0);
            CHECK(tim.v->value.at({c, 1}) == 1.0);
            CHECK(tim.v->value.at({c, 2}) == 0.0);
        }
    }
    SUBCASE("C=8 quarter fractions: rows 0-1 backward, 2-3 forward, rest identity") {
        auto tim = tim_from_shift_spec<double>(ShiftSpec{0.25, 0.25}, 8);
        for (int64_t c = 0; c < 8; ++c) {
            int64_t hot = c < 2 ? 0 : (c < 4 ? 2 : 1);
            for (int64_t j = 0; j < 3; ++j)
                CHECK(tim.v->value.at({c, j}) == (j == hot ? 1.0 : 0.0));
        }
    }
    SUBCASE("K other than 3 rejected") {
        CHECK_THROWS_AS(tim_from_shift_spec<double>(ShiftSpec{}, 4, 5), ContractError);
    }
}

TEST_CASE("TSM equals the converted TIM with zero tolerance") {
    std::mt19937 rng(33);
    for (int rep = 0; rep < 3; ++rep) {
        ShiftSpec spec{0.125 * (rep + 1), 0.125};
        auto tim = tim_from_shift_spec<double>(spec, 8);
        Tensor64 x = randn64({2, 5, 8, 2, 2}, 100 + static_cast<uint32_t>(rep));
        Tape<double> t1, t2;
        auto y_shift = tsm_forward(t1, spec, make_node<double>(x));
        auto y_tim = tim_forward(t2, tim, make_node<double>(x));
        CHECK(y_shift->value.data == y_tim->value.data);
    }
}

TEST_CASE("module gradients match finite differences") {
    SUBCASE("mem") {
        ParamStore<double> store;
        std::mt19937 rng(34);
        auto mem = make_mem<double>(store, "mem", 3, 2, rng);
        auto x = make_node<double>(randn64({1, 3, 3, 2, 2}, 35), true);
        Tensor64 proj = randn64({1, 3, 3, 2, 2}, 36);
        auto fwd = [&](Tape<double>& tape) {
            auto y = mem_forward(tape, mem, x);
            return sum(tape, mul(tape, y, make_node<double>(proj)));
        };
        auto res = grad_check(fwd, {x, mem.w_theta, mem.w_phi, mem.w_psi, mem.b_psi});
        CHECK(res.max_rel_err < 1e-4);
    }
    SUBCASE("tsm") {
        auto x = make_node<double>(randn64({1, 4, 4, 2, 2}, 37), true);
        Tensor64 proj = randn64({1, 4, 4, 2, 2}, 38);
        auto fwd = [&](Tape<double>& tape) {
            auto y = tsm_forward(tape, ShiftSpec{0.25, 0.25}, x);
            return sum(tape, mul(tape, y, make_node<double>(proj)));
        };
        auto res = grad_check(fwd, {x});
        CHECK(res.max_rel_err < 1e-4);
    }
}
