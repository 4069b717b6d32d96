#include "splat/camera.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "splat/common.hpp"

namespace splat {

Mat3 Camera::rotation() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = W[i * 4 + j];
    return r;
}

Vec3 Camera::translation() const { return {W[3], W[7], W[11]}; }

Vec3 Camera::center() const {
    // c = -R^T t
    Vec3 t = translation();
    Mat3 r = rotation();
    Vec3 c = r.transposed_mul(t);
    return {-c.x, -c.y, -c.z};
}

Vec3 Camera::to_view(const Vec3& p) const { return rotation() * p + translation(); }

void Camera::validate() const {
    if (K[0] <= 0 || K[4] <= 0) throw ValidationError("camera: focal entries must be positive");
    if (K[1] != 0 || K[3] != 0 || K[6] != 0 || K[7] != 0 || K[8] != 1)
        throw ValidationError("camera: K must be upper triangular with zero skew and K[2][2] = 1");
    Mat3 r = rotation();
    Mat3 rrt = r * r.transposed();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double expect = i == j ? 1.0 : 0.0;
            if (std::abs(rrt(i, j) - expect) > 1e-6)
                throw ValidationError("camera: rotation block is not orthonormal");
        }
    double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                 r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                 r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
    if (det < 0) throw ValidationError("camera: rotation has determinant -1 (reflection)");
    if (W[12] != 0 || W[13] != 0 || W[14] != 0 || W[15] != 1)
        throw ValidationError("camera: last row of W must be [0 0 0 1]");
    if (width <= 0 || height <= 0) throw ValidationError("camera: image dimensions must be positive");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                       int height) {
    Vec3 fwd = (target - eye).normalized();  // camera +z looks at target
    Vec3 right = fwd.cross(up).normalized();
    Vec3 down = fwd.cross(right);  // completes a right-handed x-right, y-down, z-forward frame
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.K[0] = focal;
    cam.K[4] = focal;
    cam.K[2] = width / 2.0;
    cam.K[5] = height / 2.0;
    const Vec3 rows[3] = {right, down, fwd};
    for (int i = 0; i < 3; ++i) {
        cam.W[i * 4 + 0] = rows[i].x;
        cam.W[i * 4 + 1] = rows[i].y;
        cam.W[i * 4 + 2] = rows[i].z;
        cam.W[i * 4 + 3] = -(rows[i].dot(eye));
    }
    return cam;
}

std::vector<Camera> read_camera_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open camera file: " + path);
    std::string magic;
    int version = 0, count = 0;
    in >> magic >> version >> count;
    if (magic != "SPLATCAMS") throw FormatError("camera file: bad magic '" + magic + "'");
    if (version != 1) throw FormatError("camera file: unsupported version");
    std::vector<Camera> cams;
    for (int n = 0; n < count; ++n) {
        Camera c;
        for (int i = 0; i < 9; ++i) in >> c.K[i];
        for (int i = 0; i < 16; ++i) in >> c.W[i];
        in >> c.width >> c.height;
        if (!in) throw FormatError("camera file: truncated at record " + std::to_string(n));
        c.validate();
        cams.push_back(c);
    }
    return cams;
}

void write_camera_set(const std::string& path, const std::vector<Camera>& cams) {
    for (const Camera& c : cams) c.validate();
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write camera file: " + path);
    out << "SPLATCAMS 1 " << cams.size() << "\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << ' ';
    };
    for (const Camera& c : cams) {
        for (double v : c.K) put(v);
        for (double v : c.W) put(v);
        out << c.width << ' ' << c.height << "\n";
    }
}

}  // namespace splat
