#pragma once

#include <string>
#include <vector>

#include "splat/geom.hpp"
#include "splat/sh.hpp"

namespace splat {

// Componentwise bounds on exp(log_scale).
inline constexpr double kScaleMin = 1e-7;
inline constexpr double kScaleMax = 1e3;

struct GaussianPrimitive {
    double pos[3] = {0, 0, 0};
    double rot[4] = {1, 0, 0, 0};       // quaternion (w,x,y,z), kept unit-length
    double log_scale[3] = {0, 0, 0};
    double opacity_mu = 0.0;            // opacity distribution mean, logit domain
    double opacity_sigma_raw = -10.0;   // pre-activation; sigma = softplus(raw)
    std::vector<double> sh;             // 3*(D+1)^2, channel-major
    std::vector<double> embed;          // learnable per-gaussian embedding

    double opacity_sigma() const;
};

struct Scene {
    int sh_degree = 3;
    int embed_dim = 8;
    std::vector<GaussianPrimitive> gaussians;

    int coeff_count() const { return 3 * sh_coeff_count(sh_degree); }
    size_t size() const { return gaussians.size(); }

    GaussianPrimitive make_primitive() const;  // zero-filled with correct sh/embed sizes
};

Mat3 quat_to_rotmat(const double q[4]);  // q need not be normalized

// Sigma = R S S^T R^T with S = diag(clamp(exp(log_scale))).
Mat3 build_covariance(const double q[4], const double log_scale[3]);

// Accumulates d(loss)/d(q) and d(loss)/d(log_scale) given d(loss)/d(Sigma)
// (full 3x3). Includes the quaternion-normalization jacobian.
void covariance_backward(const double q[4], const double log_scale[3], const Mat3& dSigma,
                         double dq[4], double ds[3]);

// Binary scene container. Fixed-width little-endian records; see README for
// the exact layout.
Scene read_scene(const std::string& path);
void write_scene(const std::string& path, const Scene& scene);

}  // namespace splat
