#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tei {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor. Ops may copy; no strided views.
template <class T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(checked_numel(shape)), T(0));
    }

    Tensor(std::vector<int64_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != checked_numel(shape))
            throw ShapeError("tensor data length does not match shape");
    }

    static int64_t checked_numel(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t e : s) {
            if (e < 1) throw ShapeError("tensor extents must be >= 1");
            n *= e;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    int64_t extent(int i) const { return shape.at(static_cast<size_t>(i)); }

    T& at(std::initializer_list<int64_t> idx) {
        return data[static_cast<size_t>(flat(idx))];
    }
    T at(std::initializer_list<int64_t> idx) const {
        return data[static_cast<size_t>(flat(idx))];
    }

    int64_t flat(std::initializer_list<int64_t> idx) const {
        if (static_cast<int>(idx.size()) != rank())
            throw ShapeError("index rank mismatch");
        int64_t f = 0;
        int i = 0;
        for (int64_t v : idx) {
            f = f * shape[static_cast<size_t>(i)] + v;
            ++i;
        }
        return f;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int64_t> s, T v) {
        Tensor t(std::move(s));
        t.fill(v);
        return t;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline void require_rank(const std::vector<int64_t>& s, int r, const char* what) {
    if (static_cast<int>(s.size()) != r)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) +
                         ", got shape " + shape_str(s));
}

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace tei
