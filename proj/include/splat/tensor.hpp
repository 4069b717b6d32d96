#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "splat/common.hpp"

namespace splat {

// Dense row-major 64-bit float tensor. Values are required to stay finite;
// ops that could produce NaN/Inf must check via assert_finite().
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int numel() const {
        int n = 1;
        for (int e : shape) n *= e;
        return n;
    }
    int ndim() const { return int(shape.size()); }
    int dim(int i) const { return shape[size_t(i)]; }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Throws NumericError naming `what` if any element is NaN/Inf.
    void assert_finite(const char* what) const;
};

}  // namespace splat
