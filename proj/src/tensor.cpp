#include "splat/tensor.hpp"

#include <cmath>

namespace splat {

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel() != int(data.size()))
        throw ShapeError("tensor: shape product != data length");
}

Tensor Tensor::zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(size_t(t.numel()), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.data) x = v;
    return t;
}

void Tensor::assert_finite(const char* what) const {
    for (double x : data) {
        if (!std::isfinite(x))
            throw NumericError(std::string("non-finite value in ") + what);
    }
}

}  // namespace splat
