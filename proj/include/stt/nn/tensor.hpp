#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stt::nn {

// Dense row-major tensor of doubles. Rank 1 (vectors) and rank 2 (matrices)
// cover everything this codebase needs; scalars are [1] tensors.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != count(shape))
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::vector<double> d) {
        int n = static_cast<int>(d.size());
        return Tensor({n}, std::move(d));
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int e : s) n *= e;
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    bool empty() const { return data.empty(); }
    int rank() const { return static_cast<int>(shape.size()); }

    // 2-D accessors; rank-1 tensors are treated as a single row.
    int rows() const { return rank() == 2 ? shape[0] : 1; }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void add_into(Tensor& dst, const Tensor& src) {
    assert(dst.size() == src.size());
    for (int64_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

inline void scale_inplace(Tensor& t, double s) {
    for (double& v : t.data) v *= s;
}

} // namespace stt::nn
