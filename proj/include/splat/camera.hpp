#pragma once

#include <string>
#include <vector>

#include "splat/geom.hpp"

namespace splat {

// Pinhole camera: intrinsics K (upper triangular, zero skew) and a rigid
// world-to-camera transform W (4x4 row-major).
struct Camera {
    double K[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    double W[16] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    int width = 0;
    int height = 0;

    double fx() const { return K[0]; }
    double fy() const { return K[4]; }
    double cx() const { return K[2]; }
    double cy() const { return K[5]; }

    Mat3 rotation() const;
    Vec3 translation() const;
    Vec3 center() const;  // camera position in world space

    // world -> camera space
    Vec3 to_view(const Vec3& p) const;

    // Throws ValidationError on non-orthonormal rotation (tol 1e-6),
    // reflection, nonpositive focals, or skewed K.
    void validate() const;

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                          int width, int height);
};

std::vector<Camera> read_camera_set(const std::string& path);
void write_camera_set(const std::string& path, const std::vector<Camera>& cams);

}  // namespace splat
