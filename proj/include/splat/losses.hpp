#pragma once

#include <vector>

#include "splat/scene.hpp"
#include "splat/tape.hpp"

namespace splat {

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
Tensor ssim_window();

// Mean absolute difference over two (C,H,W) tensors.
Var l1_loss(Tape& tape, Var pred, Var target);

// Mean SSIM over the valid (un-padded) window positions, averaged over
// channels. Constants C1=(0.01)^2, C2=(0.03)^2 assume [0,1] images.
Var ssim_loss(Tape& tape, Var pred, Var target);

// (1-lambda_d) * L1 + lambda_d * (1 - SSIM)/2.
Var reconstruction_loss(Tape& tape, Var pred, Var target, double dssim_weight);

// Uncertainty regularizer, handled analytically (it never touches the tape):
// value is -sum_i sigma_i as printed, or +sum_i sigma_i when flip_sign is set.
double uncertainty_reg_value(const Scene& scene, bool flip_sign);
// Accumulates weight * dL/d(sigma_raw_i) into grad (length N).
void uncertainty_reg_grad(const Scene& scene, double weight, bool flip_sign,
                          std::vector<double>& grad);

}  // namespace splat
