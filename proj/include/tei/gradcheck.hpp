#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tei/tape.hpp"

namespace tei {

struct GradCheckResult {
    double max_rel_err = 0;
    bool pass = false;
    std::string worst_location;
};

// Compares tape gradients against central finite differences at 64-bit.
// `forward` rebuilds the loss graph from the current values of `wrt`
// each time it is called; it must be a pure function of those values.
inline GradCheckResult grad_check(
    const std::function<NodePtr<double>(Tape<double>&)>& forward,
    const std::vector<NodePtr<double>>& wrt, double tol = 1e-4,
    double step_scale = 1e-4) {
    // analytic pass
    for (const auto& node : wrt) node->zero_grad();
    {
        Tape<double> tape;
        auto loss = forward(tape);
        tape.backward(loss);
    }
    std::vector<Tensor64> analytic;
    for (const auto& node : wrt) analytic.push_back(node->grad);

    GradCheckResult res;
    for (size_t ni = 0; ni < wrt.size(); ++ni) {
        auto& values = wrt[ni]->value.data;
        for (size_t i = 0; i < values.size(); ++i) {
            double v0 = values[i];
            double h = step_scale * std::max(1.0, std::abs(v0));
            auto eval = [&](double v) {
                values[i] = v;
                Tape<double> tape(/*grad_enabled=*/false);
                double out = forward(tape)->value.data[0];
                values[i] = v0;
                return out;
            };
            double numeric = (eval(v0 + h) - eval(v0 - h)) / (2 * h);
            double a = analytic[ni].data[i];
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            double rel = std::abs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_location =
                    "input " + std::to_string(ni) + " index " + std::to_string(i);
            }
        }
    }
    res.pass = res.max_rel_err < tol;
    return res;
}

}  // namespace tei
