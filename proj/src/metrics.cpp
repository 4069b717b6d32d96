#include "splat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "splat/common.hpp"
#include "splat/losses.hpp"

namespace splat {

namespace {
void check_pair(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("metrics: image dimensions differ");
}
}  // namespace

double psnr(const Image& a, const Image& b) {
    check_pair(a, b);
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse <= 0.0) return kPsnrSentinel;
    return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
    check_pair(a, b);
    const int win = 11, half = 5;
    const int h = a.height, w = a.width;
    if (h < win || w < win) throw ShapeError("ssim: image smaller than the 11x11 window");
    const Tensor window = ssim_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    long count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = half; y < h - half; ++y)
            for (int x = half; x < w - half; ++x) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int dy = -half; dy <= half; ++dy)
                    for (int dx = -half; dx <= half; ++dx) {
                        const double wt = window.data[size_t((dy + half) * win + dx + half)];
                        const double pa = a.at(y + dy, x + dx, c);
                        const double pb = b.at(y + dy, x + dx, c);
                        mx += wt * pa;
                        my += wt * pb;
                        mxx += wt * pa * pa;
                        myy += wt * pb * pb;
                        mxy += wt * pa * pb;
                    }
                const double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                         ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / double(count);
}

}  // namespace splat
