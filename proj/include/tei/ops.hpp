#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "tei/blas.hpp"
#include "tei/tape.hpp"
#include "tei/tensor.hpp"

namespace tei {

namespace detail {

template <class T>
inline T sigmoid_scalar(T x) {
    // overflow-safe split form
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

// Finite differences are only valid away from ReLU kinks; when enabled,
// this records how close any ReLU input came to zero so a gradcheck can
// reject the probe point.
struct ReluKinkTracker {
    static inline thread_local bool enabled = false;
    static inline thread_local double min_abs = 1e300;
    static void reset() {
        enabled = true;
        min_abs = 1e300;
    }
    static void stop() { enabled = false; }
};

}  // namespace detail

// ---- elementwise ----

template <class T>
NodePtr<T> sigmoid(Tape<T>& tape, const NodePtr<T>& x) {
    Tensor<T> out(x->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = detail::sigmoid_scalar(x->value.data[i]);
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y] {
            for (size_t i = 0; i < y->grad.data.size(); ++i) {
                T s = y->value.data[i];
                x->grad.data[i] += y->grad.data[i] * s * (T(1) - s);
            }
        });
    return y;
}

template <class T>
NodePtr<T> relu(Tape<T>& tape, const NodePtr<T>& x) {
    Tensor<T> out(x->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = x->value.data[i] > T(0) ? x->value.data[i] : T(0);
    if (detail::ReluKinkTracker::enabled)
        for (size_t i = 0; i < out.data.size(); ++i)
            detail::ReluKinkTracker::min_abs =
                std::min(detail::ReluKinkTracker::min_abs,
                         static_cast<double>(std::abs(x->value.data[i])));
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y] {
            for (size_t i = 0; i < y->grad.data.size(); ++i)
                if (x->value.data[i] > T(0)) x->grad.data[i] += y->grad.data[i];
        });
    return y;
}

template <class T>
NodePtr<T> add(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeError("add: shape mismatch " + shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
    Tensor<T> out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] + b->value.data[i];
    auto y = make_node<T>(std::move(out), a->requires_grad || b->requires_grad);
    if (tape.grad_enabled() && y->requires_grad)
        tape.record(y, [a, b, y] {
            if (a->requires_grad)
                for (size_t i = 0; i < y->grad.data.size(); ++i)
                    a->grad.data[i] += y->grad.data[i];
            if (b->requires_grad)
                for (size_t i = 0; i < y->grad.data.size(); ++i)
                    b->grad.data[i] += y->grad.data[i];
        });
    return y;
}

template <class T>
NodePtr<T> sub(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeError("sub: shape mismatch " + shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
    Tensor<T> out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] - b->value.data[i];
    auto y = make_node<T>(std::move(out), a->requires_grad || b->requires_grad);
    if (tape.grad_enabled() && y->requires_grad)
        tape.record(y, [a, b, y] {
            if (a->requires_grad)
                for (size_t i = 0; i < y->grad.data.size(); ++i)
                    a->grad.data[i] += y->grad.data[i];
            if (b->requires_grad)
                for (size_t i = 0; i < y->grad.data.size(); ++i)
                    b->grad.data[i] -= y->grad.data[i];
        });
    return y;
}

template <class T>
NodePtr<T> mul(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeError("mul: shape mismatch");
    Tensor<T> out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] * b->value.data[i];
    auto y = make_node<T>(std::move(out), a->requires_grad || b->requires_grad);
    if (tape.grad_enabled() && y->requires_grad)
        tape.record(y, [a, b, y] {
            if (a->requires_grad)
                for (size_t i = 0; i < y->grad.data.size(); ++i)
                    a->grad.data[i] += y->grad.data[i] * b->value.data[i];
            if (b->requires_grad)
                for (size_t i = 0; i < y->grad.data.size(); ++i)
                    b->grad.data[i] += y->grad.data[i] * a->value.data[i];
        });
    return y;
}

template <class T>
NodePtr<T> scale(Tape<T>& tape, const NodePtr<T>& x, T c) {
    Tensor<T> out(x->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = c * x->value.data[i];
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y, c] {
            for (size_t i = 0; i < y->grad.data.size(); ++i)
                x->grad.data[i] += c * y->grad.data[i];
        });
    return y;
}

// ---- shape plumbing ----

template <class T>
NodePtr<T> reshape(Tape<T>& tape, const NodePtr<T>& x, std::vector<int64_t> new_shape) {
    if (Tensor<T>::checked_numel(new_shape) != x->value.numel())
        throw ShapeError("reshape: element count mismatch");
    Tensor<T> out(std::move(new_shape), x->value.data);
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y] {
            for (size_t i = 0; i < y->grad.data.size(); ++i)
                x->grad.data[i] += y->grad.data[i];
        });
    return y;
}

// ---- pooling ----

// [N,T,C,H,W] -> [N,T,C], mean over H,W
template <class T>
NodePtr<T> gap_spatial(Tape<T>& tape, const NodePtr<T>& x) {
    require_rank(x->value.shape, 5, "gap_spatial");
    int64_t n = x->value.shape[0], t = x->value.shape[1], c = x->value.shape[2];
    int64_t hw = x->value.shape[3] * x->value.shape[4];
    Tensor<T> out({n, t, c});
    const T inv = T(1) / static_cast<T>(hw);
    for (int64_t i = 0; i < n * t * c; ++i) {
        T acc = 0;
        const T* p = x->value.data.data() + i * hw;
        for (int64_t j = 0; j < hw; ++j) acc += p[j];
        out.data[static_cast<size_t>(i)] = acc * inv;
    }
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y, hw, inv] {
            int64_t groups = y->value.numel();
            for (int64_t i = 0; i < groups; ++i) {
                T g = y->grad.data[static_cast<size_t>(i)] * inv;
                T* p = x->grad.data.data() + i * hw;
                for (int64_t j = 0; j < hw; ++j) p[j] += g;
            }
        });
    return y;
}

// [N,T,C,H,W] -> [N,C], mean over T,H,W (consensus head pooling)
template <class T>
NodePtr<T> global_avg_pool_video(Tape<T>& tape, const NodePtr<T>& x) {
    require_rank(x->value.shape, 5, "global_avg_pool_video");
    int64_t n = x->value.shape[0], t = x->value.shape[1], c = x->value.shape[2];
    int64_t hw = x->value.shape[3] * x->value.shape[4];
    Tensor<T> out({n, c});
    const T inv = T(1) / static_cast<T>(t * hw);
    for (int64_t in = 0; in < n; ++in)
        for (int64_t it = 0; it < t; ++it)
            for (int64_t ic = 0; ic < c; ++ic) {
                const T* p = x->value.data.data() + ((in * t + it) * c + ic) * hw;
                T acc = 0;
                for (int64_t j = 0; j < hw; ++j) acc += p[j];
                out.data[static_cast<size_t>(in * c + ic)] += acc * inv;
            }
    auto y = make_node<T>(std::move(out), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y, n, t, c, hw, inv] {
            for (int64_t in = 0; in < n; ++in)
                for (int64_t it = 0; it < t; ++it)
                    for (int64_t ic = 0; ic < c; ++ic) {
                        T g = y->grad.data[static_cast<size_t>(in * c + ic)] * inv;
                        T* p = x->grad.data.data() + ((in * t + it) * c + ic) * hw;
                        for (int64_t j = 0; j < hw; ++j) p[j] += g;
                    }
        });
    return y;
}

// ---- projections ----

// x [N,T,C_in] * W [C_out,C_in] (+ b [C_out]) -> [N,T,C_out]
template <class T>
NodePtr<T> channel_project(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& w,
                           const NodePtr<T>& b = nullptr) {
    require_rank(x->value.shape, 3, "channel_project");
    require_rank(w->value.shape, 2, "channel_project weight");
    int64_t n = x->value.shape[0], t = x->value.shape[1], cin = x->value.shape[2];
    int64_t cout = w->value.shape[0];
    if (w->value.shape[1] != cin)
        throw ShapeError("channel_project: weight C_in " + std::to_string(w->value.shape[1]) +
                         " != input C " + std::to_string(cin));
    if (b && b->value.shape != std::vector<int64_t>{cout})
        throw ShapeError("channel_project: bias extent mismatch");
    int64_t rows = n * t;
    Tensor<T> out({n, t, cout});
    // out_rows [rows,cout] = x_rows [rows,cin] * W^T
    gemm(false, true, static_cast<int>(rows), static_cast<int>(cout),
         static_cast<int>(cin), T(1), x->value.data.data(), static_cast<int>(cin),
         w->value.data.data(), static_cast<int>(cin), T(0), out.data.data(),
         static_cast<int>(cout));
    if (b)
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < cout; ++j)
                out.data[static_cast<size_t>(r * cout + j)] +=
                    b->value.data[static_cast<size_t>(j)];
    bool rg = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    auto y = make_node<T>(std::move(out), rg);
    if (tape.grad_enabled() && rg)
        tape.record(y, [x, w, b, y, rows, cin, cout] {
            if (x->requires_grad)
                gemm(false, false, static_cast<int>(rows), static_cast<int>(cin),
                     static_cast<int>(cout), T(1), y->grad.data.data(),
                     static_cast<int>(cout), w->value.data.data(),
                     static_cast<int>(cin), T(1), x->grad.data.data(),
                     static_cast<int>(cin));
            if (w->requires_grad)
                gemm(true, false, static_cast<int>(cout), static_cast<int>(cin),
                     static_cast<int>(rows), T(1), y->grad.data.data(),
                     static_cast<int>(cout), x->value.data.data(),
                     static_cast<int>(cin), T(1), w->grad.data.data(),
                     static_cast<int>(cin));
            if (b && b->requires_grad)
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < cout; ++j)
                        b->grad.data[static_cast<size_t>(j)] +=
                            y->grad.data[static_cast<size_t>(r * cout + j)];
        });
    return y;
}

// x [N,C_in] * W [C_out,C_in] + b -> [N,C_out]
template <class T>
NodePtr<T> linear(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& w,
                  const NodePtr<T>& b) {
    require_rank(x->value.shape, 2, "linear");
    auto x3 = reshape(tape, x, {x->value.shape[0], int64_t(1), x->value.shape[1]});
    auto y3 = channel_project(tape, x3, w, b);
    return reshape(tape, y3, {x->value.shape[0], w->value.shape[0]});
}

// x [N,T,C,H,W] * s [N,T,C] broadcast over H,W
template <class T>
NodePtr<T> mul_broadcast_channel(Tape<T>& tape, const NodePtr<T>& x,
                                 const NodePtr<T>& s) {
    require_rank(x->value.shape, 5, "mul_broadcast_channel");
    require_rank(s->value.shape, 3, "mul_broadcast_channel gate");
    if (x->value.shape[0] != s->value.shape[0] || x->value.shape[1] != s->value.shape[1] ||
        x->value.shape[2] != s->value.shape[2])
        throw ShapeError("mul_broadcast_channel: N,T,C mismatch");
    int64_t groups = s->value.numel();
    int64_t hw = x->value.shape[3] * x->value.shape[4];
    Tensor<T> out(x->value.shape);
    for (int64_t i = 0; i < groups; ++i) {
        T g = s->value.data[static_cast<size_t>(i)];
        const T* p = x->value.data.data() + i * hw;
        T* o = out.data.data() + i * hw;
        for (int64_t j = 0; j < hw; ++j) o[j] = g * p[j];
    }
    bool rg = x->requires_grad || s->requires_grad;
    auto y = make_node<T>(std::move(out), rg);
    if (tape.grad_enabled() && rg)
        tape.record(y, [x, s, y, groups, hw] {
            for (int64_t i = 0; i < groups; ++i) {
                const T* gy = y->grad.data.data() + i * hw;
                if (x->requires_grad) {
                    T g = s->value.data[static_cast<size_t>(i)];
                    T* gx = x->grad.data.data() + i * hw;
                    for (int64_t j = 0; j < hw; ++j) gx[j] += g * gy[j];
                }
                if (s->requires_grad) {
                    const T* px = x->value.data.data() + i * hw;
                    T acc = 0;
                    for (int64_t j = 0; j < hw; ++j) acc += gy[j] * px[j];
                    s->grad.data[static_cast<size_t>(i)] += acc;
                }
            }
        });
    return y;
}

// ---- spatial convolution ----

namespace detail {

template <class T>
void im2col(const T* x, int64_t cin, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, int64_t ho, int64_t wo, T* cols) {
    // cols: [ho*wo, cin*k*k] row-major for one sample
    for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
            T* row = cols + (oy * wo + ox) * (cin * k * k);
            for (int64_t c = 0; c < cin; ++c)
                for (int64_t ky = 0; ky < k; ++ky) {
                    int64_t iy = oy * stride - pad + ky;
                    for (int64_t kx = 0; kx < k; ++kx) {
                        int64_t ix = ox * stride - pad + kx;
                        T v = T(0);
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                            v = x[(c * h + iy) * w + ix];
                        row[(c * k + ky) * k + kx] = v;
                    }
                }
        }
}

template <class T>
void col2im_add(const T* cols, int64_t cin, int64_t h, int64_t w, int64_t k,
                int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* dx) {
    for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
            const T* row = cols + (oy * wo + ox) * (cin * k * k);
            for (int64_t c = 0; c < cin; ++c)
                for (int64_t ky = 0; ky < k; ++ky) {
                    int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t kx = 0; kx < k; ++kx) {
                        int64_t ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        dx[(c * h + iy) * w + ix] += row[(c * k + ky) * k + kx];
                    }
                }
        }
}

}  // namespace detail

// x [M,C_in,H,W], K [C_out,C_in,k,k], cross-correlation, no bias
template <class T>
NodePtr<T> conv2d(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& kern,
                  int64_t stride, int64_t pad) {
    require_rank(x->value.shape, 4, "conv2d");
    require_rank(kern->value.shape, 4, "conv2d kernel");
    int64_t m = x->value.shape[0], cin = x->value.shape[1];
    int64_t h = x->value.shape[2], w = x->value.shape[3];
    int64_t cout = kern->value.shape[0], k = kern->value.shape[2];
    if (kern->value.shape[1] != cin) throw ShapeError("conv2d: C_in mismatch");
    if (kern->value.shape[3] != k) throw ShapeError("conv2d: kernel must be square");
    if (k % 2 == 0) throw ShapeError("conv2d: kernel extent must be odd");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    if (h + 2 * pad - k < 0 || w + 2 * pad - k < 0)
        throw ShapeError("conv2d: non-integral output extent");
    // floor division: the last partial window is dropped, matching the usual
    // convention so that stride 2 with pad k/2 halves even extents
    int64_t ho = (h + 2 * pad - k) / stride + 1;
    int64_t wo = (w + 2 * pad - k) / stride + 1;
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: empty output");

    int64_t kd = cin * k * k;
    int64_t pp = ho * wo;  // output positions per sample
    std::vector<T> cols(static_cast<size_t>(m * pp * kd));
    for (int64_t im = 0; im < m; ++im)
        detail::im2col(x->value.data.data() + im * cin * h * w, cin, h, w, k, stride,
                       pad, ho, wo, cols.data() + im * pp * kd);

    // y_rows [m*pp, cout] = cols * K^T, then scatter to [M,Cout,Ho,Wo]
    std::vector<T> y_rows(static_cast<size_t>(m * pp * cout));
    gemm(false, true, static_cast<int>(m * pp), static_cast<int>(cout),
         static_cast<int>(kd), T(1), cols.data(), static_cast<int>(kd),
         kern->value.data.data(), static_cast<int>(kd), T(0), y_rows.data(),
         static_cast<int>(cout));
    Tensor<T> out({m, cout, ho, wo});
    for (int64_t im = 0; im < m; ++im)
        for (int64_t p = 0; p < pp; ++p) {
            const T* src = y_rows.data() + (im * pp + p) * cout;
            for (int64_t co = 0; co < cout; ++co)
                out.data[static_cast<size_t>(((im * cout + co) * pp) + p)] = src[co];
        }
    bool rg = x->requires_grad || kern->requires_grad;
    auto y = make_node<T>(std::move(out), rg);
    if (tape.grad_enabled() && rg)
        tape.record(y, [x, kern, y, m, cin, h, w, cout, k, stride, pad, ho, wo, kd, pp] {
            std::vector<T> dy_rows(static_cast<size_t>(m * pp * cout));
            for (int64_t im = 0; im < m; ++im)
                for (int64_t p = 0; p < pp; ++p) {
                    T* dst = dy_rows.data() + (im * pp + p) * cout;
                    for (int64_t co = 0; co < cout; ++co)
                        dst[co] = y->grad.data[static_cast<size_t>((im * cout + co) * pp + p)];
                }
            // cols are recomputed rather than saved across the step
            std::vector<T> cols(static_cast<size_t>(m * pp * kd));
            for (int64_t im = 0; im < m; ++im)
                detail::im2col(x->value.data.data() + im * cin * h * w, cin, h, w, k,
                               stride, pad, ho, wo, cols.data() + im * pp * kd);
            if (kern->requires_grad)
                gemm(true, false, static_cast<int>(cout), static_cast<int>(kd),
                     static_cast<int>(m * pp), T(1), dy_rows.data(),
                     static_cast<int>(cout), cols.data(), static_cast<int>(kd), T(1),
                     kern->grad.data.data(), static_cast<int>(kd));
            if (x->requires_grad) {
                std::vector<T> dcols(static_cast<size_t>(m * pp * kd));
                gemm(false, false, static_cast<int>(m * pp), static_cast<int>(kd),
                     static_cast<int>(cout), T(1), dy_rows.data(),
                     static_cast<int>(cout), kern->value.data.data(),
                     static_cast<int>(kd), T(0), dcols.data(), static_cast<int>(kd));
                for (int64_t im = 0; im < m; ++im)
                    detail::col2im_add(dcols.data() + im * pp * kd, cin, h, w, k, stride,
                                       pad, ho, wo,
                                       x->grad.data.data() + im * cin * h * w);
            }
        });
    return y;
}

// ---- batch normalization over (M,H,W) per channel ----

template <class T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    explicit BatchNormState(int64_t c)
        : running_mean(Tensor<T>::zeros({c})), running_var(Tensor<T>::full({c}, T(1))) {}
};

template <class T>
NodePtr<T> batch_norm_2d(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& gamma,
                         const NodePtr<T>& beta,
                         const std::shared_ptr<BatchNormState<T>>& state, bool training,
                         T momentum = T(0.1), T eps = T(1e-5)) {
    require_rank(x->value.shape, 4, "batch_norm_2d");
    int64_t m = x->value.shape[0], c = x->value.shape[1];
    int64_t hw = x->value.shape[2] * x->value.shape[3];
    if (gamma->value.shape != std::vector<int64_t>{c} ||
        beta->value.shape != std::vector<int64_t>{c})
        throw ShapeError("batch_norm_2d: gamma/beta extent != C");
    int64_t cnt = m * hw;

    auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(c), T(0));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(c), T(0));
    if (training) {
        for (int64_t ic = 0; ic < c; ++ic) {
            T mu = 0, sq = 0;
            for (int64_t im = 0; im < m; ++im) {
                const T* p = x->value.data.data() + (im * c + ic) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    mu += p[j];
                    sq += p[j] * p[j];
                }
            }
            mu /= static_cast<T>(cnt);
            T var = sq / static_cast<T>(cnt) - mu * mu;
            if (var < T(0)) var = T(0);
            (*mean)[static_cast<size_t>(ic)] = mu;
            (*invstd)[static_cast<size_t>(ic)] = T(1) / std::sqrt(var + eps);
            state->running_mean.data[static_cast<size_t>(ic)] =
                (T(1) - momentum) * state->running_mean.data[static_cast<size_t>(ic)] +
                momentum * mu;
            state->running_var.data[static_cast<size_t>(ic)] =
                (T(1) - momentum) * state->running_var.data[static_cast<size_t>(ic)] +
                momentum * var;
        }
    } else {
        for (int64_t ic = 0; ic < c; ++ic) {
            (*mean)[static_cast<size_t>(ic)] = state->running_mean.data[static_cast<size_t>(ic)];
            (*invstd)[static_cast<size_t>(ic)] =
                T(1) / std::sqrt(state->running_var.data[static_cast<size_t>(ic)] + eps);
        }
    }

    Tensor<T> out(x->value.shape);
    for (int64_t im = 0; im < m; ++im)
        for (int64_t ic = 0; ic < c; ++ic) {
            T mu = (*mean)[static_cast<size_t>(ic)];
            T is = (*invstd)[static_cast<size_t>(ic)];
            T g = gamma->value.data[static_cast<size_t>(ic)];
            T b = beta->value.data[static_cast<size_t>(ic)];
            const T* p = x->value.data.data() + (im * c + ic) * hw;
            T* o = out.data.data() + (im * c + ic) * hw;
            for (int64_t j = 0; j < hw; ++j) o[j] = g * (p[j] - mu) * is + b;
        }
    bool rg = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    auto y = make_node<T>(std::move(out), rg);
    if (tape.grad_enabled() && rg)
        tape.record(y, [x, gamma, beta, y, mean, invstd, m, c, hw, cnt, training] {
            for (int64_t ic = 0; ic < c; ++ic) {
                T mu = (*mean)[static_cast<size_t>(ic)];
                T is = (*invstd)[static_cast<size_t>(ic)];
                T g = gamma->value.data[static_cast<size_t>(ic)];
                T dbeta = 0, dgamma = 0;
                for (int64_t im = 0; im < m; ++im) {
                    const T* p = x->value.data.data() + (im * c + ic) * hw;
                    const T* gy = y->grad.data.data() + (im * c + ic) * hw;
                    for (int64_t j = 0; j < hw; ++j) {
                        dbeta += gy[j];
                        dgamma += gy[j] * (p[j] - mu) * is;
                    }
                }
                if (gamma->requires_grad)
                    gamma->grad.data[static_cast<size_t>(ic)] += dgamma;
                if (beta->requires_grad) beta->grad.data[static_cast<size_t>(ic)] += dbeta;
                if (x->requires_grad) {
                    if (training) {
                        T inv_cnt = T(1) / static_cast<T>(cnt);
                        for (int64_t im = 0; im < m; ++im) {
                            const T* p = x->value.data.data() + (im * c + ic) * hw;
                            const T* gy = y->grad.data.data() + (im * c + ic) * hw;
                            T* gx = x->grad.data.data() + (im * c + ic) * hw;
                            for (int64_t j = 0; j < hw; ++j) {
                                T xhat = (p[j] - mu) * is;
                                gx[j] += g * is *
                                         (gy[j] - dbeta * inv_cnt - xhat * dgamma * inv_cnt);
                            }
                        }
                    } else {
                        for (int64_t im = 0; im < m; ++im) {
                            const T* gy = y->grad.data.data() + (im * c + ic) * hw;
                            T* gx = x->grad.data.data() + (im * c + ic) * hw;
                            for (int64_t j = 0; j < hw; ++j) gx[j] += g * is * gy[j];
                        }
                    }
                }
            }
        });
    return y;
}

// ---- temporal depthwise convolution (TIM core) ----

// U [N,T,C,H,W], V [C,K] with zero fill; Y[n,t,c] = sum_i V[c,i+p] U[n,t+i,c]
template <class T>
NodePtr<T> temporal_depthwise_conv(Tape<T>& tape, const NodePtr<T>& u,
                                   const NodePtr<T>& v) {
    require_rank(u->value.shape, 5, "temporal_depthwise_conv");
    require_rank(v->value.shape, 2, "temporal_depthwise_conv kernel");
    int64_t n = u->value.shape[0], t = u->value.shape[1], c = u->value.shape[2];
    int64_t hw = u->value.shape[3] * u->value.shape[4];
    int64_t k = v->value.shape[1];
    if (v->value.shape[0] != c)
        throw ShapeError("temporal_depthwise_conv: kernel channels " +
                         std::to_string(v->value.shape[0]) + " != input C " +
                         std::to_string(c));
    if (k % 2 == 0) throw ContractError("temporal_depthwise_conv: K must be odd");
    int64_t p = (k - 1) / 2;
    Tensor<T> out(u->value.shape);
    for (int64_t in = 0; in < n; ++in)
        for (int64_t it = 0; it < t; ++it)
            for (int64_t ic = 0; ic < c; ++ic) {
                T* o = out.data.data() + ((in * t + it) * c + ic) * hw;
                for (int64_t i = -p; i <= p; ++i) {
                    int64_t ts = it + i;
                    if (ts < 0 || ts >= t) continue;
                    T w = v->value.data[static_cast<size_t>(ic * k + (i + p))];
                    if (w == T(0)) continue;
                    const T* src = u->value.data.data() + ((in * t + ts) * c + ic) * hw;
                    for (int64_t j = 0; j < hw; ++j) o[j] += w * src[j];
                }
            }
    bool rg = u->requires_grad || v->requires_grad;
    auto y = make_node<T>(std::move(out), rg);
    if (tape.grad_enabled() && rg)
        tape.record(y, [u, v, y, n, t, c, hw, k, p] {
            for (int64_t in = 0; in < n; ++in)
                for (int64_t it = 0; it < t; ++it)
                    for (int64_t ic = 0; ic < c; ++ic) {
                        const T* gy = y->grad.data.data() + ((in * t + it) * c + ic) * hw;
                        for (int64_t i = -p; i <= p; ++i) {
                            int64_t ts = it + i;
                            if (ts < 0 || ts >= t) continue;
                            size_t widx = static_cast<size_t>(ic * k + (i + p));
                            if (u->requires_grad) {
                                T w = v->value.data[widx];
                                T* gu = u->grad.data.data() + ((in * t + ts) * c + ic) * hw;
                                for (int64_t j = 0; j < hw; ++j) gu[j] += w * gy[j];
                            }
                            if (v->requires_grad) {
                                const T* src =
                                    u->value.data.data() + ((in * t + ts) * c + ic) * hw;
                                T acc = 0;
                                for (int64_t j = 0; j < hw; ++j) acc += gy[j] * src[j];
                                v->grad.data[widx] += acc;
                            }
                        }
                    }
        });
    return y;
}

// ---- losses / reductions ----

template <class T>
NodePtr<T> sum(Tape<T>& tape, const NodePtr<T>& x) {
    T acc = 0;
    for (T v : x->value.data) acc += v;
    auto y = make_node<T>(Tensor<T>({1}, {acc}), x->requires_grad);
    if (tape.grad_enabled() && x->requires_grad)
        tape.record(y, [x, y] {
            T g = y->grad.data[0];
            for (size_t i = 0; i < x->grad.data.size(); ++i) x->grad.data[i] += g;
        });
    return y;
}

// logits [N,K], labels in [0,K); mean batch cross entropy via log-sum-exp
template <class T>
NodePtr<T> cross_entropy(Tape<T>& tape, const NodePtr<T>& logits,
                         const std::vector<int>& labels) {
    require_rank(logits->value.shape, 2, "cross_entropy");
    int64_t n = logits->value.shape[0], k = logits->value.shape[1];
    if (static_cast<int64_t>(labels.size()) != n)
        throw ContractError("cross_entropy: label count != batch size");
    for (int lab : labels)
        if (lab < 0 || lab >= k)
            throw ContractError("cross_entropy: label out of range [0," +
                                std::to_string(k) + ")");
    auto softmax = std::make_shared<std::vector<T>>(logits->value.data.size());
    T loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        const T* row = logits->value.data.data() + i * k;
        T mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom = 0;
        for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        T lse = mx + std::log(denom);
        loss += lse - row[labels[static_cast<size_t>(i)]];
        for (int64_t j = 0; j < k; ++j)
            (*softmax)[static_cast<size_t>(i * k + j)] = std::exp(row[j] - lse);
    }
    loss /= static_cast<T>(n);
    auto y = make_node<T>(Tensor<T>({1}, {loss}), logits->requires_grad);
    if (tape.grad_enabled() && logits->requires_grad)
        tape.record(y, [logits, y, softmax, labels, n, k] {
            T g = y->grad.data[0] / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < k; ++j) {
                    T sm = (*softmax)[static_cast<size_t>(i * k + j)];
                    T onehot = (j == labels[static_cast<size_t>(i)]) ? T(1) : T(0);
                    logits->grad.data[static_cast<size_t>(i * k + j)] += g * (sm - onehot);
                }
        });
    return y;
}

}  // namespace tei
