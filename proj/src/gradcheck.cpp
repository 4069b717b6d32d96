#include "splat/gradcheck.hpp"

#include <cmath>

#include "splat/common.hpp"
#include "splat/field.hpp"
#include "splat/rasterizer.hpp"
#include "splat/rng.hpp"
#include "splat/scalar.hpp"
#include "splat/scene.hpp"
#include "splat/tape.hpp"

namespace splat {

std::string compare_gradients(const std::function<double()>& forward,
                              const std::vector<std::pair<std::string, double*>>& params,
                              const std::vector<double>& analytic, double step, double rtol,
                              double atol) {
    if (params.size() != analytic.size())
        throw ContractError("compare_gradients: parameter/gradient count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        double& p = *params[i].second;
        const double saved = p;
        p = saved + step;
        const double hi = forward();
        p = saved - step;
        const double lo = forward();
        p = saved;
        const double numeric = (hi - lo) / (2.0 * step);
        if (!fd_close(analytic[i], numeric, rtol, atol)) {
            char buf[160];
            std::snprintf(buf, sizeof buf, " analytic %.9g vs numeric %.9g", analytic[i],
                          numeric);
            return params[i].first + buf;
        }
    }
    return "";
}

// ---- opacity kernels ----

SuiteResult check_opacity(std::uint64_t seed) {
    SuiteResult res{"opacity", true, 0, ""};
    Rng rng(seed);
    for (int trial = 0; trial < 50 && res.ok; ++trial) {
        double mu = rng.uniform(-3.0, 3.0);
        double sigma = rng.uniform(0.0, 2.5);
        const double eps = rng.gauss();

        double dmu = 0, dsigma = 0;
        opacity_train_grad(mu, sigma, eps, dmu, dsigma);
        auto fwd_train = [&] { return opacity_train(mu, sigma, eps); };
        std::string fail = compare_gradients(
            fwd_train, {{"opacity_train.mu", &mu}, {"opacity_train.sigma", &sigma}},
            {dmu, dsigma});
        res.checked += 2;

        // chain rule through S(mu + sigma*eps): the two pathways differ by exactly eps
        if (fail.empty() && std::abs(dsigma / dmu - eps) > 1e-10)
            fail = "opacity_train gradient ratio != eps";

        if (fail.empty()) {
            double emu = 0, esigma = 0;
            opacity_expected_grad(mu, sigma, emu, esigma);
            auto fwd_exp = [&] { return opacity_expected(mu, sigma); };
            fail = compare_gradients(
                fwd_exp, {{"opacity_expected.mu", &mu}, {"opacity_expected.sigma", &sigma}},
                {emu, esigma});
            res.checked += 2;
        }
        if (!fail.empty()) {
            res.ok = false;
            res.failure = fail;
        }
    }
    return res;
}

// ---- rasterizer backward ----

namespace {
constexpr double kShC0 = 0.28209479177387814;

Scene fd_scene(Rng& rng) {
    Scene scene;
    scene.sh_degree = 3;
    scene.embed_dim = 8;
    const int k1 = sh_coeff_count(scene.sh_degree);
    for (int i = 0; i < 5; ++i) {
        GaussianPrimitive g = scene.make_primitive();
        g.pos[0] = rng.uniform(-0.7, 0.7);
        g.pos[1] = rng.uniform(-0.7, 0.7);
        g.pos[2] = rng.uniform(-0.4, 0.4);
        double n2 = 0;
        for (int c = 0; c < 4; ++c) {
            g.rot[c] = rng.gauss();
            n2 += g.rot[c] * g.rot[c];
        }
        for (int c = 0; c < 4; ++c) g.rot[c] /= std::sqrt(n2);
        // large footprints keep the 3-sigma cutoff outside the image, away
        // from finite-difference kinks
        for (int c = 0; c < 3; ++c) g.log_scale[c] = std::log(rng.uniform(0.9, 1.8));
        g.opacity_mu = logit(rng.uniform(0.3, 0.6));
        g.opacity_sigma_raw = rng.uniform(-2.0, 0.0);
        for (int c = 0; c < 3; ++c) {
            g.sh[size_t(c * k1)] = rng.uniform(0.4, 0.8) / kShC0;
            for (int b = 1; b < k1; ++b) g.sh[size_t(c * k1 + b)] = rng.uniform(-0.02, 0.02);
        }
        scene.gaussians.push_back(std::move(g));
    }
    return scene;
}
}  // namespace

SuiteResult check_rasterizer(std::uint64_t seed) {
    SuiteResult res{"rasterizer", true, 0, ""};
    Rng rng(seed);
    Scene scene = fd_scene(rng);
    const Camera cam = Camera::look_at(Vec3{0, 0, -3}, Vec3{0, 0, 0}, Vec3{0, 1, 0}, 16.0, 16, 16);
    const double bg[3] = {0.1, 0.2, 0.3};
    const int k3 = scene.coeff_count();
    const size_t n = scene.size();

    // fixed random projection of the output so every pixel contributes
    std::vector<double> wcol(16 * 16 * 3), walpha(16 * 16);
    for (double& w : wcol) w = rng.uniform(-1.0, 1.0);
    for (double& w : walpha) w = rng.uniform(-0.5, 0.5);

    const RenderMode modes[3] = {RenderMode::train_stochastic(seed ^ 0x5eedull),
                                 RenderMode::inference_expected(),
                                 RenderMode::deterministic_mean()};
    for (const RenderMode& mode : modes) {
        auto forward = [&]() {
            std::vector<double> coeffs;
            coeffs.reserve(n * size_t(k3));
            for (const auto& g : scene.gaussians)
                coeffs.insert(coeffs.end(), g.sh.begin(), g.sh.end());
            RenderOutput out =
                render(scene, cam, ColorSource::sh(coeffs.data(), scene.sh_degree), mode, bg);
            double loss = 0;
            for (size_t i = 0; i < out.color.size(); ++i) loss += wcol[i] * out.color[i];
            for (size_t i = 0; i < out.alpha.size(); ++i) loss += walpha[i] * out.alpha[i];
            return loss;
        };

        std::vector<double> coeffs;
        for (const auto& g : scene.gaussians)
            coeffs.insert(coeffs.end(), g.sh.begin(), g.sh.end());
        RenderContext ctx;
        render(scene, cam, ColorSource::sh(coeffs.data(), scene.sh_degree), mode, bg, &ctx);
        RenderGrads grads;
        render_backward(ctx, mode, wcol, &walpha, grads);

        std::vector<std::pair<std::string, double*>> params;
        std::vector<double> analytic;
        const std::string tag = "mode" + std::to_string(int(mode.opacity)) + ".g";
        for (size_t i = 0; i < n; ++i) {
            GaussianPrimitive& g = scene.gaussians[i];
            const std::string p = tag + std::to_string(i) + ".";
            for (int c = 0; c < 3; ++c) {
                params.emplace_back(p + "pos" + std::to_string(c), &g.pos[c]);
                analytic.push_back(grads.pos[i * 3 + c]);
            }
            for (int c = 0; c < 4; ++c) {
                params.emplace_back(p + "rot" + std::to_string(c), &g.rot[c]);
                analytic.push_back(grads.rot[i * 4 + c]);
            }
            for (int c = 0; c < 3; ++c) {
                params.emplace_back(p + "log_scale" + std::to_string(c), &g.log_scale[c]);
                analytic.push_back(grads.log_scale[i * 3 + c]);
            }
            params.emplace_back(p + "mu", &g.opacity_mu);
            analytic.push_back(grads.mu[i]);
            params.emplace_back(p + "sigma_raw", &g.opacity_sigma_raw);
            analytic.push_back(grads.sigma_raw[i]);
            for (int c = 0; c < k3; ++c) {
                params.emplace_back(p + "sh" + std::to_string(c), &g.sh[size_t(c)]);
                analytic.push_back(grads.color[i * size_t(k3) + c]);
            }
        }
        const std::string fail = compare_gradients(forward, params, analytic);
        res.checked += int(params.size());
        if (!fail.empty()) {
            res.ok = false;
            res.failure = fail;
            break;
        }
    }
    return res;
}

// ---- field networks ----

namespace {
struct FieldFixture {
    FieldNetworks nets;
    Scene scene;
    Camera cam;
    LatentQueueBank bank;
    std::vector<double> clean;
    Tensor image, noise, coeff_w;
    int style = 0;
    double tau = 0.07;

    // `grad_*` buffers are filled by run(true).
    Tensor grad_pos, grad_sh, grad_embed;
    std::vector<Tensor> grad_net;

    double run(bool with_grad) {
        Tape tape;
        FieldNetworks::Lifted lifted = nets.lift(tape, with_grad);
        const size_t n = scene.size();
        const int k3 = scene.coeff_count();
        Tensor pos_t = Tensor::zeros({int(n), 3});
        Tensor sh_t = Tensor::zeros({int(n), k3});
        Tensor emb_t = Tensor::zeros({int(n), scene.embed_dim});
        for (size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) pos_t.data[i * 3 + c] = scene.gaussians[i].pos[c];
            for (int c = 0; c < k3; ++c)
                sh_t.data[i * size_t(k3) + c] = scene.gaussians[i].sh[size_t(c)];
            for (int c = 0; c < scene.embed_dim; ++c)
                emb_t.data[i * size_t(scene.embed_dim) + c] = scene.gaussians[i].embed[size_t(c)];
        }
        pos_t.requires_grad = sh_t.requires_grad = emb_t.requires_grad = with_grad;
        Var pos_v = tape.leaf(std::move(pos_t));
        Var sh_v = tape.leaf(std::move(sh_t));
        Var emb_v = tape.leaf(std::move(emb_t));

        Var z = nets.encode(tape, lifted, tape.constant(image));
        Var q = normalize_flat(tape, z);
        Var fmap = nets.decode(tape, lifted, z);
        Var feats = sample_point_features(tape, fmap, pos_v, cam);
        Var pe = positional_encoding(tape, pos_v, nets.cfg.pe_bands);
        Var mlp_in = tape.concat_cols({feats, emb_v, pe});
        Var v = nets.mlp_forward(tape, lifted, mlp_in);
        Var coeffs = tape.add(sh_v, v);
        Var l_coeff = tape.sum(tape.mul(coeffs, tape.constant(coeff_w)));
        Var l_con = contrastive_loss(tape, q, bank, style, tau, clean);
        Var zg = nets.generate(tape, lifted, tape.constant(noise));
        Var l_gen = generator_alignment_loss(tape, normalize_flat(tape, zg), bank, tau, clean);
        Var loss = tape.add(tape.add(l_coeff, l_con), l_gen);
        const double value = tape.value(loss).data[0];
        if (with_grad) {
            tape.backward(loss);
            grad_pos = tape.grad(pos_v);
            grad_sh = tape.grad(sh_v);
            grad_embed = tape.grad(emb_v);
            grad_net.clear();
            for (Var w : lifted.vars) grad_net.push_back(tape.grad(w));
        }
        return value;
    }
};

std::vector<double> random_unit(Rng& rng, size_t len) {
    std::vector<double> v(len);
    double n2 = 0;
    for (double& x : v) {
        x = rng.gauss();
        n2 += x * x;
    }
    for (double& x : v) x /= std::sqrt(n2);
    return v;
}
}  // namespace

SuiteResult check_field(std::uint64_t seed) {
    SuiteResult res{"field", true, 0, ""};
    Rng rng(seed + 1);
    FieldFixture fx;
    FieldConfig fc;
    fx.nets.init(fc, rng);
    fx.scene = fd_scene(rng);
    fx.cam = Camera::look_at(Vec3{0, 0, -3}, Vec3{0, 0, 0}, Vec3{0, 1, 0}, 16.0, 16, 16);
    for (auto& g : fx.scene.gaussians)
        for (int c = 0; c < fx.scene.embed_dim; ++c) g.embed[size_t(c)] = rng.gauss() * 0.3;

    fx.image = Tensor::zeros({3, 16, 16});
    for (double& x : fx.image.data) x = rng.uniform(0.0, 1.0);
    fx.noise = Tensor::zeros({fc.latent_channels, 2, 2});
    for (double& x : fx.noise.data) x = rng.gauss();
    fx.coeff_w = Tensor::zeros({int(fx.scene.size()), fx.scene.coeff_count()});
    for (double& x : fx.coeff_w.data) x = rng.uniform(-1.0, 1.0);

    const size_t latent_len = size_t(fc.latent_channels) * 2 * 2;
    fx.bank.init(2);
    fx.bank.push(0, random_unit(rng, latent_len));
    fx.bank.push(0, random_unit(rng, latent_len));
    fx.bank.push(1, random_unit(rng, latent_len));
    fx.clean = random_unit(rng, latent_len);
    fx.style = 0;

    fx.run(true);
    auto forward = [&fx]() { return fx.run(false); };

    std::vector<std::pair<std::string, double*>> params;
    std::vector<double> analytic;
    const int k3 = fx.scene.coeff_count();
    for (size_t i = 0; i < fx.scene.size(); ++i) {
        GaussianPrimitive& g = fx.scene.gaussians[i];
        const std::string p = "g" + std::to_string(i) + ".";
        for (int c = 0; c < 3; ++c) {
            params.emplace_back(p + "pos" + std::to_string(c), &g.pos[c]);
            analytic.push_back(fx.grad_pos.data[i * 3 + c]);
        }
        for (int c = 0; c < k3; c += 7) {  // SH enters linearly; a stride suffices
            params.emplace_back(p + "sh" + std::to_string(c), &g.sh[size_t(c)]);
            analytic.push_back(fx.grad_sh.data[i * size_t(k3) + c]);
        }
        for (int c = 0; c < fx.scene.embed_dim; ++c) {
            params.emplace_back(p + "embed" + std::to_string(c), &g.embed[size_t(c)]);
            analytic.push_back(fx.grad_embed.data[i * size_t(fx.scene.embed_dim) + c]);
        }
    }
    auto net_params = fx.nets.params();
    for (size_t p = 0; p < net_params.size(); ++p) {
        Tensor& t = *net_params[p].second;
        const size_t count = std::min<size_t>(t.data.size(), 12);
        for (size_t k = 0; k < count; ++k) {
            const size_t idx = count == t.data.size() ? k : size_t(rng.below(t.data.size()));
            params.emplace_back(net_params[p].first + "[" + std::to_string(idx) + "]",
                                &t.data[idx]);
            analytic.push_back(fx.grad_net[p].data[idx]);
        }
    }

    const std::string fail = compare_gradients(forward, params, analytic);
    res.checked = int(params.size());
    if (!fail.empty()) {
        res.ok = false;
        res.failure = fail;
    }
    return res;
}

std::vector<SuiteResult> run_gradcheck(const std::string& cases, std::uint64_t seed) {
    std::vector<SuiteResult> out;
    const bool all = cases == "all";
    if (all || cases == "opacity") out.push_back(check_opacity(seed));
    if (all || cases == "rasterizer") out.push_back(check_rasterizer(seed));
    if (all || cases == "field") out.push_back(check_field(seed));
    if (out.empty())
        throw ValidationError("check-grad: unknown case set '" + cases +
                              "' (expected all|opacity|rasterizer|field)");
    return out;
}

}  // namespace splat
