#include "splat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "splat/common.hpp"
#include "splat/rng.hpp"
#include "splat/scalar.hpp"

namespace splat {

namespace {
// Probit-style denominator constant for E[S(mu + sigma*eps)]. The textbook
// pi/8 value drifts past 0.013 absolute error for sigma near 3; this value is
// calibrated to minimize the worst-case error against the Monte-Carlo mean
// over mu in [-6,6], sigma in [0,3] (max |error| ~ 0.0082).
constexpr double kExpectedOpacityK = 0.359;
}

double opacity_train(double mu, double sigma, double eps) {
    if (sigma < 0) throw ContractError("opacity_train: sigma must be >= 0");
    return sigmoid(mu + sigma * eps);
}

void opacity_train_grad(double mu, double sigma, double eps, double& dmu, double& dsigma) {
    if (sigma < 0) throw ContractError("opacity_train_grad: sigma must be >= 0");
    const double sp = sigmoid_grad(mu + sigma * eps);
    dmu = sp;
    dsigma = sp * eps;
}

double opacity_expected(double mu, double sigma) {
    if (sigma < 0) throw ContractError("opacity_expected: sigma must be >= 0");
    return sigmoid(mu / std::sqrt(1.0 + kExpectedOpacityK * sigma * sigma));
}

void opacity_expected_grad(double mu, double sigma, double& dmu, double& dsigma) {
    if (sigma < 0) throw ContractError("opacity_expected_grad: sigma must be >= 0");
    const double d2 = 1.0 + kExpectedOpacityK * sigma * sigma;
    const double d = std::sqrt(d2);
    const double sp = sigmoid_grad(mu / d);
    dmu = sp / d;
    dsigma = -sp * mu * kExpectedOpacityK * sigma / (d2 * d);
}

std::optional<Projected> project_gaussian(const GaussianPrimitive& g, const Camera& cam) {
    const Vec3 t = cam.to_view({g.pos[0], g.pos[1], g.pos[2]});
    if (t.z <= kZNear) return std::nullopt;
    const double fx = cam.fx(), fy = cam.fy();
    Projected p;
    p.depth = t.z;
    p.mean2d[0] = fx * t.x / t.z + cam.cx();
    p.mean2d[1] = fy * t.y / t.z + cam.cy();

    const Mat3 sigma = build_covariance(g.rot, g.log_scale);
    const Mat3 rw = cam.rotation();
    // J: 2x3 perspective jacobian at the view-space mean
    const double j00 = fx / t.z, j02 = -fx * t.x / (t.z * t.z);
    const double j11 = fy / t.z, j12 = -fy * t.y / (t.z * t.z);
    // M = J * R_w (2x3)
    double m[2][3];
    for (int c = 0; c < 3; ++c) {
        m[0][c] = j00 * rw(0, c) + j02 * rw(2, c);
        m[1][c] = j11 * rw(1, c) + j12 * rw(2, c);
    }
    // cov2d = M Sigma M^T + floor
    double ms[2][3];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            ms[r][c] = m[r][0] * sigma(0, c) + m[r][1] * sigma(1, c) + m[r][2] * sigma(2, c);
    p.cov2d.a = ms[0][0] * m[0][0] + ms[0][1] * m[0][1] + ms[0][2] * m[0][2] + kLowPassFloor;
    p.cov2d.b = ms[0][0] * m[1][0] + ms[0][1] * m[1][1] + ms[0][2] * m[1][2];
    p.cov2d.c = p.cov2d.b;
    p.cov2d.d = ms[1][0] * m[1][0] + ms[1][1] * m[1][1] + ms[1][2] * m[1][2] + kLowPassFloor;
    return p;
}

Image RenderOutput::to_image() const {
    Image img(width, height);
    for (size_t i = 0; i < color.size(); ++i) img.data[i] = std::clamp(color[i], 0.0, 1.0);
    return img;
}

void RenderGrads::resize_for(const Scene& scene, const ColorSource& colors) {
    const size_t n = scene.size();
    pos.assign(n * 3, 0.0);
    rot.assign(n * 4, 0.0);
    log_scale.assign(n * 3, 0.0);
    mu.assign(n, 0.0);
    sigma_raw.assign(n, 0.0);
    const size_t per = colors.kind == ColorSource::Kind::RGB
                           ? 3
                           : size_t(3 * sh_coeff_count(colors.sh_degree));
    color.assign(n * per, 0.0);
    screen_grad_norm.assign(n, 0.0);
    touched.assign(n, 0);
}

namespace {

using GaussianRecord = RenderContext::GaussianRecord;

void gaussian_color(const GaussianPrimitive& g, size_t idx, const ColorSource& colors,
                    const Vec3& cam_center, double out[3]) {
    if (colors.kind == ColorSource::Kind::RGB) {
        for (int c = 0; c < 3; ++c) out[c] = colors.data[idx * 3 + c];
        return;
    }
    const int k3 = 3 * sh_coeff_count(colors.sh_degree);
    const Vec3 dir = (Vec3{g.pos[0], g.pos[1], g.pos[2]} - cam_center).normalized();
    const double d[3] = {dir.x, dir.y, dir.z};
    sh_evaluate(d, {colors.data + size_t(idx) * k3, size_t(k3)}, colors.sh_degree, out);
}

double gaussian_opacity(const GaussianPrimitive& g, OpacityMode mode, double eps) {
    const double sigma = g.opacity_sigma();
    switch (mode) {
        case OpacityMode::TrainStochastic: return opacity_train(g.opacity_mu, sigma, eps);
        case OpacityMode::InferenceExpected: return opacity_expected(g.opacity_mu, sigma);
        case OpacityMode::DeterministicMean: return sigmoid(g.opacity_mu);
    }
    return 0.0;
}

// Projects, activates opacity and evaluates colors for every gaussian.
void prepare(const Scene& scene, const Camera& cam, const ColorSource& colors,
             const RenderMode& mode, std::vector<GaussianRecord>& recs, std::vector<double>& eps) {
    const size_t n = scene.size();
    recs.assign(n, {});
    eps.clear();
    if (mode.opacity == OpacityMode::TrainStochastic) {
        Rng rng(mode.seed);
        eps.resize(n);
        for (size_t i = 0; i < n; ++i) eps[i] = rng.gauss();
    }
    const Vec3 cc = cam.center();
    for (size_t i = 0; i < n; ++i) {
        const GaussianPrimitive& g = scene.gaussians[i];
        auto proj = project_gaussian(g, cam);
        if (!proj) continue;  // culled behind camera
        GaussianRecord& r = recs[i];
        r.valid = true;
        r.proj = *proj;
        const double det = proj->cov2d.det();
        if (det <= 0) throw NumericError("render: singular 2d covariance despite low-pass floor");
        r.conic[0] = proj->cov2d.d / det;
        r.conic[1] = -proj->cov2d.b / det;
        r.conic[2] = proj->cov2d.a / det;
        r.alpha = gaussian_opacity(g, mode.opacity, eps.empty() ? 0.0 : eps[i]);
        gaussian_color(g, i, colors, cc, r.color);
    }
}

// Falloff-modulated blend weight at a pixel center. Returns false when the
// gaussian is skipped there.
bool blend_weight(const GaussianRecord& r, double px, double py, double& alpha_prime,
                  double& gauss, bool& clamped) {
    const double dx = px - r.proj.mean2d[0];
    const double dy = py - r.proj.mean2d[1];
    const double power =
        -0.5 * (r.conic[0] * dx * dx + 2.0 * r.conic[1] * dx * dy + r.conic[2] * dy * dy);
    if (power > 0.0) return false;
    gauss = std::exp(power);
    const double a = r.alpha * gauss;
    clamped = a > kAlphaClamp;
    alpha_prime = clamped ? kAlphaClamp : a;
    return alpha_prime >= kAlphaSkip;
}

RenderOutput alloc_output(const Camera& cam) {
    RenderOutput out;
    out.width = cam.width;
    out.height = cam.height;
    out.color.assign(size_t(cam.width) * cam.height * 3, 0.0);
    out.alpha.assign(size_t(cam.width) * cam.height, 0.0);
    out.contrib_count.assign(size_t(cam.width) * cam.height, 0);
    return out;
}

}  // namespace

RenderOutput render(const Scene& scene, const Camera& cam, const ColorSource& colors,
                    const RenderMode& mode, const double background[3], RenderContext* ctx) {
    cam.validate();
    RenderOutput out = alloc_output(cam);
    const int w = cam.width, h = cam.height;

    std::vector<GaussianRecord> recs;
    std::vector<double> eps;
    prepare(scene, cam, colors, mode, recs, eps);

    // bucket gaussians into the pixels their 3-sigma ellipse touches
    std::vector<std::vector<std::int32_t>> buckets(size_t(w) * h);
    for (size_t i = 0; i < recs.size(); ++i) {
        const GaussianRecord& r = recs[i];
        if (!r.valid) continue;
        const Mat2& c2 = r.proj.cov2d;
        const double mid = 0.5 * (c2.a + c2.d);
        const double lam_max = mid + std::sqrt(std::max(0.0, mid * mid - c2.det()));
        const double radius = 3.0 * std::sqrt(lam_max);
        const int x0 = std::max(0, int(std::floor(r.proj.mean2d[0] - radius - 0.5)));
        const int x1 = std::min(w - 1, int(std::ceil(r.proj.mean2d[0] + radius - 0.5)));
        const int y0 = std::max(0, int(std::floor(r.proj.mean2d[1] - radius - 0.5)));
        const int y1 = std::min(h - 1, int(std::ceil(r.proj.mean2d[1] + radius - 0.5)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) buckets[size_t(y) * w + x].push_back(std::int32_t(i));
    }

    if (ctx) {
        ctx->mode = mode;
        ctx->width = w;
        ctx->height = h;
        for (int c = 0; c < 3; ++c) ctx->background[c] = background[c];
        ctx->colors = colors;
        ctx->scene = &scene;
        ctx->camera = &cam;
        ctx->eps = eps;
        ctx->per_gaussian = recs;
        ctx->blend_lists.assign(size_t(w) * h, {});
        ctx->raw_color.assign(size_t(w) * h * 3, 0.0);
    }

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t pix = size_t(y) * w + x;
            auto& list = buckets[pix];
            std::sort(list.begin(), list.end(), [&](std::int32_t a, std::int32_t b) {
                if (recs[size_t(a)].proj.depth != recs[size_t(b)].proj.depth)
                    return recs[size_t(a)].proj.depth < recs[size_t(b)].proj.depth;
                return a < b;  // deterministic tie-break
            });
            const double px = x + 0.5, py = y + 0.5;
            double T = 1.0;
            double acc[3] = {0, 0, 0};
            int contribs = 0;
            for (std::int32_t gi : list) {
                if (T < kTransmittanceStop) break;
                double ap, gs;
                bool clamped;
                if (!blend_weight(recs[size_t(gi)], px, py, ap, gs, clamped)) continue;
                for (int c = 0; c < 3; ++c) acc[c] += recs[size_t(gi)].color[c] * ap * T;
                T *= (1.0 - ap);
                ++contribs;
                if (ctx) ctx->blend_lists[pix].push_back(gi);
            }
            for (int c = 0; c < 3; ++c) {
                const double raw = acc[c] + T * background[c];
                if (ctx) ctx->raw_color[pix * 3 + c] = raw;
                out.color[pix * 3 + c] = std::max(0.0, raw);
            }
            out.alpha[pix] = 1.0 - T;
            out.contrib_count[pix] = contribs;
        }
    }
    return out;
}

RenderOutput render_reference(const Scene& scene, const Camera& cam, const ColorSource& colors,
                              const RenderMode& mode, const double background[3]) {
    cam.validate();
    RenderOutput out = alloc_output(cam);
    const int w = cam.width, h = cam.height;

    std::vector<GaussianRecord> recs;
    std::vector<double> eps;
    prepare(scene, cam, colors, mode, recs, eps);

    std::vector<std::int32_t> order;
    for (size_t i = 0; i < recs.size(); ++i)
        if (recs[i].valid) order.push_back(std::int32_t(i));
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        if (recs[size_t(a)].proj.depth != recs[size_t(b)].proj.depth)
            return recs[size_t(a)].proj.depth < recs[size_t(b)].proj.depth;
        return a < b;
    });

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t pix = size_t(y) * w + x;
            const double px = x + 0.5, py = y + 0.5;
            double T = 1.0;
            double acc[3] = {0, 0, 0};
            int contribs = 0;
            for (std::int32_t gi : order) {
                double ap, gs;
                bool clamped;
                if (!blend_weight(recs[size_t(gi)], px, py, ap, gs, clamped)) continue;
                for (int c = 0; c < 3; ++c) acc[c] += recs[size_t(gi)].color[c] * ap * T;
                T *= (1.0 - ap);
                ++contribs;
            }
            for (int c = 0; c < 3; ++c)
                out.color[pix * 3 + c] = std::max(0.0, acc[c] + T * background[c]);
            out.alpha[pix] = 1.0 - T;
            out.contrib_count[pix] = contribs;
        }
    }
    return out;
}

void render_backward(const RenderContext& ctx, const RenderMode& mode,
                     const std::vector<double>& dColor, const std::vector<double>* dAlpha,
                     RenderGrads& grads) {
    if (mode.opacity != ctx.mode.opacity || mode.seed != ctx.mode.seed)
        throw ContractError("render_backward: mode does not match the recorded forward pass");
    const Scene& scene = *ctx.scene;
    const Camera& cam = *ctx.camera;
    const int w = ctx.width, h = ctx.height;
    if (int(dColor.size()) != w * h * 3)
        throw ShapeError("render_backward: upstream color gradient has wrong size");
    if (dAlpha && int(dAlpha->size()) != w * h)
        throw ShapeError("render_backward: upstream alpha gradient has wrong size");

    grads.resize_for(scene, ctx.colors);
    const size_t n = scene.size();
    // per-gaussian screen-space accumulators
    std::vector<double> d_alpha_act(n, 0.0);     // w.r.t. activated opacity alpha_i
    std::vector<double> d_mean2d(n * 2, 0.0);
    std::vector<double> d_conic(n * 3, 0.0);     // [da, db, dd], db covers both off-diagonals
    std::vector<double> d_color3(n * 3, 0.0);

    struct Entry {
        std::int32_t gi;
        double ap, gs, T;
        bool clamped;
    };
    std::vector<Entry> entries;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t pix = size_t(y) * w + x;
            const auto& list = ctx.blend_lists[pix];
            if (list.empty() && !dAlpha) {
                // background-only pixel; color gradient dies in the clamp or bg
                continue;
            }
            double gcol[3];
            for (int c = 0; c < 3; ++c)
                gcol[c] = ctx.raw_color[pix * 3 + c] >= 0.0 ? dColor[pix * 3 + c] : 0.0;
            const double galpha = dAlpha ? (*dAlpha)[pix] : 0.0;
            if (gcol[0] == 0 && gcol[1] == 0 && gcol[2] == 0 && galpha == 0) continue;

            const double px = x + 0.5, py = y + 0.5;
            // replay forward to recover per-entry weights and transmittance
            entries.clear();
            double T = 1.0;
            for (std::int32_t gi : list) {
                double ap, gs;
                bool clamped;
                if (!blend_weight(ctx.per_gaussian[size_t(gi)], px, py, ap, gs, clamped))
                    throw NumericError("render_backward: forward replay diverged");
                entries.push_back({gi, ap, gs, T, clamped});
                T *= (1.0 - ap);
            }
            const double t_fin = T;
            // color mass behind the current entry, incl. background
            double behind[3] = {ctx.background[0] * t_fin, ctx.background[1] * t_fin,
                                ctx.background[2] * t_fin};
            for (size_t k = entries.size(); k-- > 0;) {
                const Entry& e = entries[k];
                const GaussianRecord& r = ctx.per_gaussian[size_t(e.gi)];
                double dap = 0.0;
                for (int c = 0; c < 3; ++c) {
                    d_color3[size_t(e.gi) * 3 + c] += gcol[c] * e.ap * e.T;
                    dap += gcol[c] * (r.color[c] * e.T - behind[c] / (1.0 - e.ap));
                }
                dap += galpha * t_fin / (1.0 - e.ap);
                for (int c = 0; c < 3; ++c) behind[c] += r.color[c] * e.ap * e.T;
                grads.touched[size_t(e.gi)] = 1;
                if (e.clamped) continue;  // flat region of min(., 0.99)
                // alpha' = alpha * exp(power)
                d_alpha_act[size_t(e.gi)] += dap * e.gs;
                const double dpower = dap * r.alpha * e.gs;
                const double dx = px - r.proj.mean2d[0];
                const double dy = py - r.proj.mean2d[1];
                d_mean2d[size_t(e.gi) * 2 + 0] += dpower * (r.conic[0] * dx + r.conic[1] * dy);
                d_mean2d[size_t(e.gi) * 2 + 1] += dpower * (r.conic[1] * dx + r.conic[2] * dy);
                d_conic[size_t(e.gi) * 3 + 0] += dpower * (-0.5 * dx * dx);
                d_conic[size_t(e.gi) * 3 + 1] += dpower * (-dx * dy);
                d_conic[size_t(e.gi) * 3 + 2] += dpower * (-0.5 * dy * dy);
            }
        }
    }

    // per-gaussian geometry / parameter chain rules
    const Mat3 rw = cam.rotation();
    const Vec3 cc = cam.center();
    const double fx = cam.fx(), fy = cam.fy();
    const int k3 = ctx.colors.kind == ColorSource::Kind::SHCoeffs
                       ? 3 * sh_coeff_count(ctx.colors.sh_degree)
                       : 3;
    for (size_t i = 0; i < n; ++i) {
        const GaussianRecord& r = ctx.per_gaussian[i];
        if (!r.valid || !grads.touched[i]) continue;
        const GaussianPrimitive& g = scene.gaussians[i];

        grads.screen_grad_norm[i] +=
            std::hypot(d_mean2d[i * 2 + 0], d_mean2d[i * 2 + 1]);

        // opacity activation
        {
            const double sigma = g.opacity_sigma();
            double dmu = 0, dsig = 0;
            switch (ctx.mode.opacity) {
                case OpacityMode::TrainStochastic:
                    opacity_train_grad(g.opacity_mu, sigma, ctx.eps[i], dmu, dsig);
                    break;
                case OpacityMode::InferenceExpected:
                    opacity_expected_grad(g.opacity_mu, sigma, dmu, dsig);
                    break;
                case OpacityMode::DeterministicMean:
                    dmu = sigmoid_grad(g.opacity_mu);
                    dsig = 0;
                    break;
            }
            grads.mu[i] += d_alpha_act[i] * dmu;
            grads.sigma_raw[i] += d_alpha_act[i] * dsig * softplus_grad(g.opacity_sigma_raw);
        }

        // color source
        Vec3 dpos_from_color{0, 0, 0};
        if (ctx.colors.kind == ColorSource::Kind::RGB) {
            for (int c = 0; c < 3; ++c) grads.color[i * 3 + c] += d_color3[i * 3 + c];
        } else {
            const int k = sh_coeff_count(ctx.colors.sh_degree);
            const Vec3 diff = Vec3{g.pos[0], g.pos[1], g.pos[2]} - cc;
            const double rlen = diff.norm();
            const Vec3 dhat = diff * (1.0 / rlen);
            const double dv[3] = {dhat.x, dhat.y, dhat.z};
            double basis[16], bgrad[48];
            sh_basis(dv, ctx.colors.sh_degree, basis);
            sh_basis_dir_grad(dv, ctx.colors.sh_degree, bgrad);
            const double* coeff = ctx.colors.data + i * size_t(k3);
            double ddir[3] = {0, 0, 0};
            for (int c = 0; c < 3; ++c) {
                const double gc = d_color3[i * 3 + c];
                if (gc == 0) continue;
                for (int b = 0; b < k; ++b) {
                    grads.color[i * size_t(k3) + size_t(c * k + b)] += gc * basis[b];
                    const double cb = coeff[c * k + b];
                    ddir[0] += gc * cb * bgrad[b * 3 + 0];
                    ddir[1] += gc * cb * bgrad[b * 3 + 1];
                    ddir[2] += gc * cb * bgrad[b * 3 + 2];
                }
            }
            // through normalization of the view direction
            const double proj = ddir[0] * dhat.x + ddir[1] * dhat.y + ddir[2] * dhat.z;
            dpos_from_color = Vec3{(ddir[0] - proj * dhat.x) / rlen, (ddir[1] - proj * dhat.y) / rlen,
                                   (ddir[2] - proj * dhat.z) / rlen};
        }

        // conic -> cov2d: C = V^{-1}, dV = -C dC C
        const double ca = r.conic[0], cb = r.conic[1], cd = r.conic[2];
        const double da = d_conic[i * 3 + 0], db = d_conic[i * 3 + 1], dd = d_conic[i * 3 + 2];
        // dC as symmetric [[da, db/2],[db/2, dd]] so both off-diagonals carry half
        const double h00 = ca * da + cb * (db * 0.5);
        const double h01 = ca * (db * 0.5) + cb * dd;
        const double h10 = cb * da + cd * (db * 0.5);
        const double h11 = cb * (db * 0.5) + cd * dd;
        double dcov[2][2];
        dcov[0][0] = -(h00 * ca + h01 * cb);
        dcov[0][1] = -(h00 * cb + h01 * cd);
        dcov[1][0] = -(h10 * ca + h11 * cb);
        dcov[1][1] = -(h10 * cb + h11 * cd);

        // view-space position and jacobian, recomputed from the scene
        const Vec3 t = cam.to_view({g.pos[0], g.pos[1], g.pos[2]});
        const double tz = t.z;
        const double j00 = fx / tz, j02 = -fx * t.x / (tz * tz);
        const double j11 = fy / tz, j12 = -fy * t.y / (tz * tz);
        double m[2][3];
        for (int c = 0; c < 3; ++c) {
            m[0][c] = j00 * rw(0, c) + j02 * rw(2, c);
            m[1][c] = j11 * rw(1, c) + j12 * rw(2, c);
        }
        const Mat3 sigma3 = build_covariance(g.rot, g.log_scale);

        // dM = (dC + dC^T) M Sigma
        double sym[2][2] = {{2 * dcov[0][0], dcov[0][1] + dcov[1][0]},
                            {dcov[0][1] + dcov[1][0], 2 * dcov[1][1]}};
        double msig[2][3];
        for (int rr = 0; rr < 2; ++rr)
            for (int c = 0; c < 3; ++c)
                msig[rr][c] =
                    m[rr][0] * sigma3(0, c) + m[rr][1] * sigma3(1, c) + m[rr][2] * sigma3(2, c);
        double dM[2][3];
        for (int rr = 0; rr < 2; ++rr)
            for (int c = 0; c < 3; ++c)
                dM[rr][c] = sym[rr][0] * msig[0][c] + sym[rr][1] * msig[1][c];

        // dSigma = M^T dC M
        Mat3 dSigma;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                dSigma(a, b) = m[0][a] * (dcov[0][0] * m[0][b] + dcov[0][1] * m[1][b]) +
                               m[1][a] * (dcov[1][0] * m[0][b] + dcov[1][1] * m[1][b]);
        covariance_backward(g.rot, g.log_scale, dSigma, &grads.rot[i * 4], &grads.log_scale[i * 3]);

        // dJ = dM R_w^T, then J's dependence on the view-space point
        double dJ00 = 0, dJ02 = 0, dJ11 = 0, dJ12 = 0;
        for (int c = 0; c < 3; ++c) {
            dJ00 += dM[0][c] * rw(0, c);
            dJ02 += dM[0][c] * rw(2, c);
            dJ11 += dM[1][c] * rw(1, c);
            dJ12 += dM[1][c] * rw(2, c);
        }
        Vec3 dt{0, 0, 0};
        dt.x += dJ02 * (-fx / (tz * tz));
        dt.y += dJ12 * (-fy / (tz * tz));
        dt.z += dJ00 * (-fx / (tz * tz)) + dJ11 * (-fy / (tz * tz)) +
                dJ02 * (2 * fx * t.x / (tz * tz * tz)) + dJ12 * (2 * fy * t.y / (tz * tz * tz));

        // mean2d = (fx tx/tz + cx, fy ty/tz + cy)
        const double gmx = d_mean2d[i * 2 + 0], gmy = d_mean2d[i * 2 + 1];
        dt.x += gmx * fx / tz;
        dt.y += gmy * fy / tz;
        dt.z += -gmx * fx * t.x / (tz * tz) - gmy * fy * t.y / (tz * tz);

        const Vec3 dpos = rw.transposed_mul(dt) + dpos_from_color;
        grads.pos[i * 3 + 0] += dpos.x;
        grads.pos[i * 3 + 1] += dpos.y;
        grads.pos[i * 3 + 2] += dpos.z;
    }
}

}  // namespace splat
