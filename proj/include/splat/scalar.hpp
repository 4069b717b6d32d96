#pragma once

#include <cmath>

#include "splat/common.hpp"

namespace splat {

// Numerically stable logistic sigmoid. Saturates cleanly for |x| large.
inline double sigmoid(double x) {
    if (!std::isfinite(x)) throw NumericError("sigmoid: non-finite input");
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double sigmoid_grad(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// softplus(x) = log(1+e^x), overflow-safe
inline double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

inline double softplus_grad(double x) { return sigmoid(x); }

}  // namespace splat
