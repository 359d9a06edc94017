#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tei/tensor.hpp"

namespace tei {

// A value in the computation graph. Gradients accumulate into `grad`
// when Tape::backward replays the recorded ops in reverse.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;

    Node() = default;
    Node(Tensor<T> v, bool rg) : value(std::move(v)), requires_grad(rg) {
        grad = Tensor<T>::zeros(value.shape);
    }

    void zero_grad() { grad.fill(T(0)); }
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
NodePtr<T> make_node(Tensor<T> v, bool requires_grad = false) {
    return std::make_shared<Node<T>>(std::move(v), requires_grad);
}

// Ordered record of executed primitive ops. backward() visits each
// recorded op exactly once, in reverse execution order.
template <class T>
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    void record(const NodePtr<T>& out, std::function<void()> backward_fn) {
        if (grad_enabled_) {
            outputs_.push_back(out);
            ops_.push_back(std::move(backward_fn));
        }
    }

    size_t size() const { return ops_.size(); }

    void backward(const NodePtr<T>& loss) {
        if (loss->value.numel() != 1)
            throw ContractError("backward: loss must be a scalar");
        // Intermediate results are zeroed before each replay so a second
        // backward() accumulates fresh gradients into the leaves rather
        // than re-propagating stale ones.
        for (auto& out : outputs_) out->zero_grad();
        loss->grad.data[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    void clear() {
        ops_.clear();
        outputs_.clear();
    }

private:
    bool grad_enabled_;
    std::vector<std::function<void()>> ops_;
    std::vector<NodePtr<T>> outputs_;
};

template <class T>
struct Parameter {
    std::string name;
    NodePtr<T> node;           // value + grad
    Tensor<T> momentum_buf;    // same shape as value

    Parameter(std::string n, Tensor<T> v)
        : name(std::move(n)), node(make_node<T>(std::move(v), true)) {
        momentum_buf = Tensor<T>::zeros(node->value.shape);
    }
};

template <class T>
class ParamStore {
public:
    NodePtr<T> add(const std::string& name, Tensor<T> value) {
        if (index_.count(name))
            throw ContractError("duplicate parameter name: " + name);
        index_[name] = params_.size();
        params_.emplace_back(name, std::move(value));
        return params_.back().node;
    }

    Parameter<T>& find(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return params_[it->second];
    }

    std::vector<Parameter<T>>& all() { return params_; }
    const std::vector<Parameter<T>>& all() const { return params_; }

    size_t size() const { return params_.size(); }

    int64_t count_scalars() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.node->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.node->zero_grad();
    }

    // buf <- momentum*buf + (grad + wd*value); value <- value - lr*buf
    void sgd_step(T lr, T momentum = T(0.9), T weight_decay = T(1e-4)) {
        for (auto& p : params_) {
            auto& v = p.node->value.data;
            auto& g = p.node->grad.data;
            auto& m = p.momentum_buf.data;
            for (size_t i = 0; i < v.size(); ++i) {
                m[i] = momentum * m[i] + (g[i] + weight_decay * v[i]);
                v[i] -= lr * m[i];
            }
        }
    }

private:
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace tei
