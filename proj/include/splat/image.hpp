#pragma once

#include <string>
#include <vector>

namespace splat {

// RGB image, doubles in [0,1], row-major (y, x, channel).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // height * width * 3

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(size_t(w) * h * 3, 0.0) {}

    double& at(int y, int x, int c) { return data[size_t((y * width + x) * 3 + c)]; }
    double at(int y, int x, int c) const { return data[size_t((y * width + x) * 3 + c)]; }
};

// Binary PPM (P6), maxval 255 or 65535. P3 is rejected explicitly.
Image read_ppm(const std::string& path);
// Writes P6 maxval 255; values clamped to [0,1] then quantized.
void write_ppm(const std::string& path, const Image& img);

}  // namespace splat
