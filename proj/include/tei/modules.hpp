#pragma once

#include <cmath>
#include <random>
#include <string>

#include "tei/ops.hpp"
#include "tei/tape.hpp"

namespace tei {

namespace detail {

template <class T>
Tensor<T> uniform_fan_in(std::vector<int64_t> shape, int64_t fan_in, std::mt19937& rng) {
    T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                                static_cast<double>(bound));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

}  // namespace detail

inline int64_t reduced_channels(int64_t c, int r) {
    if (r < 1) throw ContractError("reduction ratio must be >= 1");
    int64_t cr = c / r;
    return cr < 1 ? 1 : cr;
}

// Motion enhancement: gate each frame's channels by a sigmoid of the
// projected difference between its pooled features and the next frame's.
template <class T>
struct MemModule {
    int64_t channels = 0;
    int64_t reduced = 0;
    int r = 8;
    NodePtr<T> w_theta, b_theta;  // C/r x C
    NodePtr<T> w_phi, b_phi;      // C/r x C
    NodePtr<T> w_psi, b_psi;      // C x C/r

    int64_t weight_count() const { return 2 * channels * reduced + reduced * channels; }
    int64_t bias_count() const { return 2 * reduced + channels; }
    int64_t param_count() const { return weight_count() + bias_count(); }
};

template <class T>
MemModule<T> make_mem(ParamStore<T>& store, const std::string& prefix, int64_t c, int r,
                      std::mt19937& rng) {
    if (c < 1) throw ShapeError("MEM: channel count must be >= 1");
    MemModule<T> m;
    m.channels = c;
    m.r = r;
    m.reduced = reduced_channels(c, r);
    m.w_theta = store.add(prefix + ".w_theta", detail::uniform_fan_in<T>({m.reduced, c}, c, rng));
    m.b_theta = store.add(prefix + ".b_theta", Tensor<T>::zeros({m.reduced}));
    m.w_phi = store.add(prefix + ".w_phi", detail::uniform_fan_in<T>({m.reduced, c}, c, rng));
    m.b_phi = store.add(prefix + ".b_phi", Tensor<T>::zeros({m.reduced}));
    m.w_psi = store.add(prefix + ".w_psi",
                        detail::uniform_fan_in<T>({c, m.reduced}, m.reduced, rng));
    m.b_psi = store.add(prefix + ".b_psi", Tensor<T>::zeros({c}));
    return m;
}

// Per-channel temporal kernel, no bias; zero fill keeps T unchanged.
template <class T>
struct TimModule {
    int64_t channels = 0;
    int64_t k = 3;
    NodePtr<T> v;  // C x K

    int64_t param_count() const { return channels * k; }
};

template <class T>
Tensor<T> tim_identity_kernel(int64_t c, int64_t k) {
    if (k % 2 == 0) throw ContractError("TIM kernel extent must be odd");
    Tensor<T> v({c, k});
    for (int64_t i = 0; i < c; ++i) v.data[static_cast<size_t>(i * k + k / 2)] = T(1);
    return v;
}

template <class T>
TimModule<T> make_tim(ParamStore<T>& store, const std::string& prefix, int64_t c,
                      int64_t k = 3) {
    TimModule<T> m;
    m.channels = c;
    m.k = k;
    m.v = store.add(prefix + ".v", tim_identity_kernel<T>(c, k));
    return m;
}

// SE-style self gating baseline: gate from the frame's own pooled features.
template <class T>
struct SeModule {
    int64_t channels = 0;
    int64_t reduced = 0;
    int r = 8;
    NodePtr<T> w_theta, b_theta;  // C/r x C
    NodePtr<T> w_psi, b_psi;      // C x C/r

    int64_t param_count() const {
        return channels * reduced + reduced * channels + reduced + channels;
    }
};

template <class T>
SeModule<T> make_se(ParamStore<T>& store, const std::string& prefix, int64_t c, int r,
                    std::mt19937& rng) {
    SeModule<T> m;
    m.channels = c;
    m.r = r;
    m.reduced = reduced_channels(c, r);
    m.w_theta = store.add(prefix + ".w_theta", detail::uniform_fan_in<T>({m.reduced, c}, c, rng));
    m.b_theta = store.add(prefix + ".b_theta", Tensor<T>::zeros({m.reduced}));
    m.w_psi = store.add(prefix + ".w_psi",
                        detail::uniform_fan_in<T>({c, m.reduced}, m.reduced, rng));
    m.b_psi = store.add(prefix + ".b_psi", Tensor<T>::zeros({c}));
    return m;
}

// Fixed temporal shift; fractions of the channel range shift backward,
// then forward, lowest indices first; the remainder is copied.
struct ShiftSpec {
    double fraction_backward = 0.125;
    double fraction_forward = 0.125;
};

inline void validate_shift_spec(const ShiftSpec& s) {
    if (s.fraction_backward < 0 || s.fraction_forward < 0 ||
        s.fraction_backward + s.fraction_forward > 1.0 + 1e-12)
        throw ContractError("ShiftSpec: fractions must be nonnegative and sum <= 1");
}

inline int64_t shift_count(double fraction, int64_t c) {
    return static_cast<int64_t>(fraction * static_cast<double>(c) + 1e-9);
}

// ---- internal slicing helpers for MEM ----

namespace detail {

// x [N,T,C] -> [N,len,C] starting at time `start`
template <class T>
NodePtr<T> slice_time3(Tape<T>& tape, const NodePtr<T>& x, int64_t start, int64_t len) {
    require_rank(x->value.shape, 3, "slice_time3");
    int64_t n = x->value.shape[0], t = x->value.shape[1], c = x->value.shape[2];
    if (start < 0 || start + len > t) throw ShapeError("slice_time3: out of range");
    Tensor<T> out({n, len, c});
    for (int64_t in = 0; in < n; ++in)
        for (int64_t it = 0; it < len; ++it)
            for (int64_t ic = 0; ic < c; ++ic)
                out.at({in, it, ic}) = x->value.at({in, start + it, ic});
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y, start, len, n, c] {
            for (int64_t in = 0; in < n; ++in)
                for (int64_t it = 0; it < len; ++it)
                    for (int64_t ic = 0; ic < c; ++ic)
                        x->grad.at({in, start + it, ic}) += y->grad.at({in, it, ic});
        });
    return y;
}

// u_t = s_t * x_t for t < T-1 gate steps; u_T = x_T copied bitwise.
// x [N,T,C,H,W], s [N,T-1,C]
template <class T>
NodePtr<T> gate_frames_copy_last(Tape<T>& tape, const NodePtr<T>& x,
                                 const NodePtr<T>& s) {
    int64_t n = x->value.shape[0], t = x->value.shape[1], c = x->value.shape[2];
    int64_t hw = x->value.shape[3] * x->value.shape[4];
    if (s->value.shape != std::vector<int64_t>{n, t - 1, c})
        throw ShapeError("gate_frames_copy_last: gate shape mismatch");
    Tensor<T> out(x->value.shape);
    for (int64_t in = 0; in < n; ++in) {
        for (int64_t it = 0; it < t - 1; ++it)
            for (int64_t ic = 0; ic < c; ++ic) {
                T g = s->value.at({in, it, ic});
                const T* p = x->value.data.data() + ((in * t + it) * c + ic) * hw;
                T* o = out.data.data() + ((in * t + it) * c + ic) * hw;
                for (int64_t j = 0; j < hw; ++j) o[j] = g * p[j];
            }
        // last frame: exact copy
        const T* p = x->value.data.data() + ((in * t + (t - 1)) * c) * hw;
        T* o = out.data.data() + ((in * t + (t - 1)) * c) * hw;
        std::copy(p, p + c * hw, o);
    }
    bool rg = x->requires_grad || s->requires_grad;
    auto y = make_node<T>(std::move(out), rg);
    if (tape.grad_enabled() && rg)
        tape.record(y, [x, s, y, n, t, c, hw] {
            for (int64_t in = 0; in < n; ++in) {
                for (int64_t it = 0; it < t - 1; ++it)
                    for (int64_t ic = 0; ic < c; ++ic) {
                        int64_t base = ((in * t + it) * c + ic) * hw;
                        const T* gy = y->grad.data.data() + base;
                        if (x->requires_grad) {
                            T g = s->value.at({in, it, ic});
                            T* gx = x->grad.data.data() + base;
                            for (int64_t j = 0; j < hw; ++j) gx[j] += g * gy[j];
                        }
                        if (s->requires_grad) {
                            const T* px = x->value.data.data() + base;
                            T acc = 0;
                            for (int64_t j = 0; j < hw; ++j) acc += gy[j] * px[j];
                            s->grad.at({in, it, ic}) += acc;
                        }
                    }
                if (x->requires_grad) {
                    int64_t base = ((in * t + (t - 1)) * c) * hw;
                    const T* gy = y->grad.data.data() + base;
                    T* gx = x->grad.data.data() + base;
                    for (int64_t j = 0; j < c * hw; ++j) gx[j] += gy[j];
                }
            }
        });
    return y;
}

}  // namespace detail

// ---- module forwards ----

template <class T>
NodePtr<T> mem_forward(Tape<T>& tape, const MemModule<T>& mem, const NodePtr<T>& x) {
    require_rank(x->value.shape, 5, "mem_forward");
    int64_t t = x->value.shape[1], c = x->value.shape[2];
    if (t < 2) throw ContractError("MEM requires at least two frames");
    if (c != mem.channels) throw ShapeError("mem_forward: channel mismatch");
    auto pooled = gap_spatial(tape, x);                                  // [N,T,C]
    auto cur = detail::slice_time3(tape, pooled, 0, t - 1);              // frames 1..T-1
    auto nxt = detail::slice_time3(tape, pooled, 1, t - 1);              // frames 2..T
    auto a = channel_project(tape, cur, mem.w_theta, mem.b_theta);
    auto b = channel_project(tape, nxt, mem.w_phi, mem.b_phi);
    auto diff = sub(tape, a, b);
    auto gate = sigmoid(tape, channel_project(tape, diff, mem.w_psi, mem.b_psi));
    return detail::gate_frames_copy_last(tape, x, gate);
}

template <class T>
NodePtr<T> tim_forward(Tape<T>& tape, const TimModule<T>& tim, const NodePtr<T>& u) {
    return temporal_depthwise_conv(tape, u, tim.v);
}

template <class T>
NodePtr<T> tei_forward(Tape<T>& tape, const MemModule<T>& mem, const TimModule<T>& tim,
                       const NodePtr<T>& x) {
    return tim_forward(tape, tim, mem_forward(tape, mem, x));
}

template <class T>
NodePtr<T> se_forward(Tape<T>& tape, const SeModule<T>& se, const NodePtr<T>& x) {
    require_rank(x->value.shape, 5, "se_forward");
    if (x->value.shape[2] != se.channels) throw ShapeError("se_forward: channel mismatch");
    auto pooled = gap_spatial(tape, x);
    auto hidden = relu(tape, channel_project(tape, pooled, se.w_theta, se.b_theta));
    auto gate = sigmoid(tape, channel_project(tape, hidden, se.w_psi, se.b_psi));
    return mul_broadcast_channel(tape, x, gate);
}

// Frozen TIM whose rows are the one-hot shift kernels.
template <class T>
TimModule<T> tim_from_shift_spec(const ShiftSpec& spec, int64_t c, int64_t k = 3) {
    if (k != 3) throw ContractError("tim_from_shift_spec: only K=3 is defined");
    validate_shift_spec(spec);
    int64_t n_back = shift_count(spec.fraction_backward, c);
    int64_t n_fwd = shift_count(spec.fraction_forward, c);
    Tensor<T> v({c, k});
    for (int64_t i = 0; i < c; ++i) {
        if (i < n_back)
            v.data[static_cast<size_t>(i * k + 0)] = T(1);  // Y[t] = U[t-1]
        else if (i < n_back + n_fwd)
            v.data[static_cast<size_t>(i * k + 2)] = T(1);  // Y[t] = U[t+1]
        else
            v.data[static_cast<size_t>(i * k + 1)] = T(1);  // identity
    }
    TimModule<T> m;
    m.channels = c;
    m.k = k;
    m.v = make_node<T>(std::move(v), false);
    return m;
}

// Direct shift implementation; must agree exactly with the TIM route.
template <class T>
NodePtr<T> tsm_forward(Tape<T>& tape, const ShiftSpec& spec, const NodePtr<T>& x) {
    require_rank(x->value.shape, 5, "tsm_forward");
    validate_shift_spec(spec);
    int64_t n = x->value.shape[0], t = x->value.shape[1], c = x->value.shape[2];
    int64_t hw = x->value.shape[3] * x->value.shape[4];
    int64_t n_back = shift_count(spec.fraction_backward, c);
    int64_t n_fwd = shift_count(spec.fraction_forward, c);
    auto src_time = [n_back, n_fwd](int64_t ic, int64_t it) -> int64_t {
        if (ic < n_back) return it - 1;
        if (ic < n_back + n_fwd) return it + 1;
        return it;
    };
    Tensor<T> out(x->value.shape);
    for (int64_t in = 0; in < n; ++in)
        for (int64_t it = 0; it < t; ++it)
            for (int64_t ic = 0; ic < c; ++ic) {
                int64_t ts = src_time(ic, it);
                if (ts < 0 || ts >= t) continue;  // zero fill
                const T* p = x->value.data.data() + ((in * t + ts) * c + ic) * hw;
                T* o = out.data.data() + ((in * t + it) * c + ic) * hw;
                std::copy(p, p + hw, o);
            }
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y, n, t, c, hw, src_time] {
            for (int64_t in = 0; in < n; ++in)
                for (int64_t it = 0; it < t; ++it)
                    for (int64_t ic = 0; ic < c; ++ic) {
                        int64_t ts = src_time(ic, it);
                        if (ts < 0 || ts >= t) continue;
                        const T* gy = y->grad.data.data() + ((in * t + it) * c + ic) * hw;
                        T* gx = x->grad.data.data() + ((in * t + ts) * c + ic) * hw;
                        for (int64_t j = 0; j < hw; ++j) gx[j] += gy[j];
                    }
        });
    return y;
}

}  // namespace tei
