#pragma once

#include "splat/image.hpp"

namespace splat {

// PSNR sentinel reported for identical images (MSE = 0).
inline constexpr double kPsnrSentinel = 99.0;

// 10*log10(1/MSE) on [0,1] images, capped at the sentinel.
double psnr(const Image& a, const Image& b);

// Mean SSIM (11x11 Gaussian window sigma=1.5, valid positions only), averaged
// over channels; same constants as the training DSSIM term.
double ssim(const Image& a, const Image& b);

}  // namespace splat
