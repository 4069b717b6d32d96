#include "splat/losses.hpp"

#include <cmath>

#include "splat/common.hpp"
#include "splat/scalar.hpp"

namespace splat {

Tensor ssim_window() {
    const int size = 11;
    const double sigma = 1.5;
    Tensor w = Tensor::zeros({size, size});
    double total = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - 5, dx = x - 5;
            const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            w.data[size_t(y * size + x)] = v;
            total += v;
        }
    for (double& v : w.data) v /= total;
    return w;
}

namespace {
void check_pair(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("loss: image shapes differ");
    if (a.ndim() != 3) throw ShapeError("loss: expected (C,H,W) tensors");
}
}  // namespace

Var l1_loss(Tape& tape, Var pred, Var target) {
    check_pair(tape.value(pred), tape.value(target));
    return tape.mean(tape.abs(tape.sub(pred, target)));
}

Var ssim_loss(Tape& tape, Var pred, Var target) {
    check_pair(tape.value(pred), tape.value(target));
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    Var w = tape.constant(ssim_window());
    Var mu_x = tape.depthwise_valid_conv(pred, w);
    Var mu_y = tape.depthwise_valid_conv(target, w);
    Var xx = tape.depthwise_valid_conv(tape.mul(pred, pred), w);
    Var yy = tape.depthwise_valid_conv(tape.mul(target, target), w);
    Var xy = tape.depthwise_valid_conv(tape.mul(pred, target), w);
    Var mu_xx = tape.mul(mu_x, mu_x);
    Var mu_yy = tape.mul(mu_y, mu_y);
    Var mu_xy = tape.mul(mu_x, mu_y);
    Var var_x = tape.sub(xx, mu_xx);
    Var var_y = tape.sub(yy, mu_yy);
    Var cov = tape.sub(xy, mu_xy);
    Var num = tape.mul(tape.add_scalar(tape.mul_scalar(mu_xy, 2.0), c1),
                       tape.add_scalar(tape.mul_scalar(cov, 2.0), c2));
    Var den = tape.mul(tape.add_scalar(tape.add(mu_xx, mu_yy), c1),
                       tape.add_scalar(tape.add(var_x, var_y), c2));
    return tape.mean(tape.div(num, den));
}

Var reconstruction_loss(Tape& tape, Var pred, Var target, double dssim_weight) {
    Var l1 = l1_loss(tape, pred, target);
    Var dssim = tape.mul_scalar(
        tape.add_scalar(tape.neg(ssim_loss(tape, pred, target)), 1.0), 0.5);
    return tape.add(tape.mul_scalar(l1, 1.0 - dssim_weight),
                    tape.mul_scalar(dssim, dssim_weight));
}

double uncertainty_reg_value(const Scene& scene, bool flip_sign) {
    double total = 0.0;
    for (const GaussianPrimitive& g : scene.gaussians) total += g.opacity_sigma();
    return flip_sign ? total : -total;
}

void uncertainty_reg_grad(const Scene& scene, double weight, bool flip_sign,
                          std::vector<double>& grad) {
    if (grad.size() != scene.size()) throw ShapeError("uncertainty_reg_grad: buffer size mismatch");
    const double sign = flip_sign ? 1.0 : -1.0;
    for (size_t i = 0; i < scene.size(); ++i)
        grad[i] += weight * sign * softplus_grad(scene.gaussians[i].opacity_sigma_raw);
}

}  // namespace splat
