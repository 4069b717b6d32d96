#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splat/camera.hpp"
#include "splat/image.hpp"
#include "splat/scene.hpp"

namespace splat {

inline constexpr double kZNear = 0.01;
inline constexpr double kLowPassFloor = 0.3;   // px^2 added to cov2d diagonal
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kAlphaSkip = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;

enum class OpacityMode { TrainStochastic, InferenceExpected, DeterministicMean };

struct RenderMode {
    OpacityMode opacity = OpacityMode::InferenceExpected;
    std::uint64_t seed = 0;  // per-gaussian noise; only used by TrainStochastic

    static RenderMode train_stochastic(std::uint64_t seed) {
        return {OpacityMode::TrainStochastic, seed};
    }
    static RenderMode inference_expected() { return {OpacityMode::InferenceExpected, 0}; }
    static RenderMode deterministic_mean() { return {OpacityMode::DeterministicMean, 0}; }
};

// ---- opacity kernels (stochastic training form / closed-form expectation) ----

// alpha = S(mu + sigma * eps); sigma is the post-activation std-dev (>= 0).
double opacity_train(double mu, double sigma, double eps);
// d(alpha)/d(mu), d(alpha)/d(sigma). Their ratio is exactly eps.
void opacity_train_grad(double mu, double sigma, double eps, double& dmu, double& dsigma);

// alpha = S(mu / sqrt(1 + k sigma^2)) — probit-style approximation of
// E_eps[S(mu + sigma*eps)] with a calibrated k (see rasterizer.cpp).
double opacity_expected(double mu, double sigma);
void opacity_expected_grad(double mu, double sigma, double& dmu, double& dsigma);

// ---- projection ----

struct Projected {
    double mean2d[2];  // pixel coords
    Mat2 cov2d;        // includes the low-pass diagonal floor
    double depth;      // view-space z
};

// Empty result means the primitive is behind the near plane (culled, not fatal).
std::optional<Projected> project_gaussian(const GaussianPrimitive& g, const Camera& cam);

// ---- rendering ----

// Per-gaussian color input: flat RGB (N*3) or SH coefficients (N*3*(D+1)^2,
// channel-major per gaussian, evaluated at the view direction from the camera
// center).
struct ColorSource {
    enum class Kind { RGB, SHCoeffs };
    Kind kind = Kind::RGB;
    const double* data = nullptr;
    int sh_degree = 0;

    static ColorSource rgb(const double* d) { return {Kind::RGB, d, 0}; }
    static ColorSource sh(const double* d, int degree) { return {Kind::SHCoeffs, d, degree}; }
};

struct RenderOutput {
    int width = 0, height = 0;
    std::vector<double> color;       // H*W*3, background composited, clamped >= 0
    std::vector<double> alpha;       // H*W accumulated opacity in [0,1]
    std::vector<int> contrib_count;  // gaussians blended per pixel

    Image to_image() const;
};

// Everything the backward pass needs from a forward render.
struct RenderContext {
    RenderMode mode;
    int width = 0, height = 0;
    double background[3] = {0, 0, 0};
    ColorSource colors;
    const Scene* scene = nullptr;
    const Camera* camera = nullptr;
    std::vector<double> eps;  // per-gaussian, TrainStochastic only

    struct GaussianRecord {
        bool valid = false;
        Projected proj;
        double conic[3];  // inverse cov2d: [a, b, d] of [[a,b],[b,d]]
        double alpha = 0;
        double color[3] = {0, 0, 0};
    };
    std::vector<GaussianRecord> per_gaussian;
    std::vector<std::vector<std::int32_t>> blend_lists;  // per pixel, front-to-back, early-stopped
    std::vector<double> raw_color;                       // pre-clamp composite
};

struct RenderGrads {
    std::vector<double> pos;        // N*3
    std::vector<double> rot;        // N*4
    std::vector<double> log_scale;  // N*3
    std::vector<double> mu;         // N
    std::vector<double> sigma_raw;  // N
    std::vector<double> color;      // matches the ColorSource layout
    // densification statistics
    std::vector<double> screen_grad_norm;  // N, ||dL/dmean2d|| accumulated
    std::vector<std::uint8_t> touched;     // N

    void resize_for(const Scene& scene, const ColorSource& colors);
};

// Optimized renderer: 3-sigma footprints, per-pixel exact depth sort, early
// termination. `ctx`, when non-null, records what render_backward needs.
RenderOutput render(const Scene& scene, const Camera& cam, const ColorSource& colors,
                    const RenderMode& mode, const double background[3],
                    RenderContext* ctx = nullptr);

// Brute-force reference: every gaussian against every pixel, full sort, no
// early termination. Correctness oracle for `render`.
RenderOutput render_reference(const Scene& scene, const Camera& cam, const ColorSource& colors,
                              const RenderMode& mode, const double background[3]);

// dLoss/d(everything) from upstream image gradients. `mode` must match the
// forward mode recorded in ctx. dAlpha may be null.
void render_backward(const RenderContext& ctx, const RenderMode& mode,
                     const std::vector<double>& dColor, const std::vector<double>* dAlpha,
                     RenderGrads& grads);

}  // namespace splat
