#include "splat/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "splat/common.hpp"

namespace splat {

namespace {
// Skips whitespace and '#' comments between PPM header tokens.
int next_header_int(std::istream& in, const char* what) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    in >> v;
    if (!in || v < 0) throw FormatError(std::string("ppm: bad header field: ") + what);
    return v;
}
}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 == 'P' && m1 == '3')
        throw FormatError("ppm: ASCII variant (P3) is not supported, use binary P6");
    if (m0 != 'P' || m1 != '6') throw FormatError("ppm: bad magic, expected P6");
    const int w = next_header_int(in, "width");
    const int h = next_header_int(in, "height");
    const int maxval = next_header_int(in, "maxval");
    if (maxval != 255 && maxval != 65535)
        throw FormatError("ppm: maxval must be 255 or 65535, got " + std::to_string(maxval));
    in.get();  // single whitespace after maxval
    Image img(w, h);
    const size_t n = size_t(w) * h * 3;
    if (maxval == 255) {
        std::vector<unsigned char> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n));
        if (size_t(in.gcount()) != n) throw FormatError("ppm: truncated pixel data");
        for (size_t i = 0; i < n; ++i) img.data[i] = buf[i] / 255.0;
    } else {
        std::vector<unsigned char> buf(2 * n);
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(2 * n));
        if (size_t(in.gcount()) != 2 * n) throw FormatError("ppm: truncated pixel data");
        for (size_t i = 0; i < n; ++i) {
            // 16-bit samples are big-endian per the PPM spec
            unsigned v = (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1];
            img.data[i] = v / 65535.0;
        }
    }
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write image: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> buf(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

}  // namespace splat
