#include "splat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "splat/common.hpp"
#include "splat/losses.hpp"
#include "splat/metrics.hpp"
#include "splat/rasterizer.hpp"
#include "splat/scalar.hpp"

namespace fs = std::filesystem;

namespace splat {

VariantFlags variant_flags(Variant v) {
    switch (v) {
        case Variant::M1: return {false, false, true};
        case Variant::M2: return {true, false, true};
        case Variant::M3: return {true, true, true};
        case Variant::M4: return {false, true, true};
        case Variant::M5: return {false, true, false};
        case Variant::M6: return {true, true, false};
    }
    throw ContractError("variant_flags: bad variant");
}

Variant parse_variant(const std::string& name) {
    if (name.size() == 2 && name[0] == 'M' && name[1] >= '1' && name[1] <= '6')
        return Variant(name[1] - '1');
    throw ValidationError("unknown variant '" + name + "' (expected M1..M6)");
}

std::string variant_name(Variant v) { return "M" + std::to_string(int(v) + 1); }

// ---- config ----

void TrainConfig::validate() const {
    if (iterations < 0) throw ValidationError("config: iterations must be >= 0");
    if (tau <= 0) throw ValidationError("config: tau must be > 0");
    if (dssim_weight < 0 || dssim_weight > 1)
        throw ValidationError("config: dssim_weight must lie in [0,1]");
    for (double lr : {lr_position, lr_sh, lr_opacity, lr_scale, lr_rotation, lr_embed, lr_field})
        if (lr <= 0) throw ValidationError("config: learning rates must be > 0");
    if (position_lr_final_mult <= 0 || position_lr_final_mult > 1)
        throw ValidationError("config: position_lr_final_mult must lie in (0,1]");
    if (densify_interval <= 0) throw ValidationError("config: densify_interval must be > 0");
    if (opacity_reset_interval <= 0)
        throw ValidationError("config: opacity_reset_interval must be > 0");
    if (queue_capacity < 1) throw ValidationError("config: queue_capacity must be >= 1");
    if (max_gaussians < 1) throw ValidationError("config: max_gaussians must be >= 1");
    if (scene_extent <= 0) throw ValidationError("config: scene_extent must be > 0");
}

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_dbl = [&] { return std::stod(value); };
    if (key == "iterations") cfg.iterations = as_int();
    else if (key == "lambda_ucn") cfg.lambda_ucn = as_dbl();
    else if (key == "tau") cfg.tau = as_dbl();
    else if (key == "dssim_weight") cfg.dssim_weight = as_dbl();
    else if (key == "lr_position") cfg.lr_position = as_dbl();
    else if (key == "position_lr_final_mult") cfg.position_lr_final_mult = as_dbl();
    else if (key == "lr_sh") cfg.lr_sh = as_dbl();
    else if (key == "lr_opacity") cfg.lr_opacity = as_dbl();
    else if (key == "lr_scale") cfg.lr_scale = as_dbl();
    else if (key == "lr_rotation") cfg.lr_rotation = as_dbl();
    else if (key == "lr_embed") cfg.lr_embed = as_dbl();
    else if (key == "lr_field") cfg.lr_field = as_dbl();
    else if (key == "densify_interval") cfg.densify_interval = as_int();
    else if (key == "densify_from") cfg.densify_from = as_int();
    else if (key == "densify_until") cfg.densify_until = as_int();
    else if (key == "densify_grad_threshold") cfg.densify_grad_threshold = as_dbl();
    else if (key == "prune_opacity") cfg.prune_opacity = as_dbl();
    else if (key == "opacity_reset_interval") cfg.opacity_reset_interval = as_int();
    else if (key == "max_gaussians") cfg.max_gaussians = as_int();
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "variant") cfg.variant = parse_variant(value);
    else if (key == "queue_capacity") cfg.queue_capacity = as_int();
    else if (key == "ucn_flip_sign") cfg.ucn_flip_sign = as_int() != 0;
    else if (key == "scene_extent") cfg.scene_extent = as_dbl();
    else throw ValidationError("config: unknown key '" + key + "'");
}

TrainConfig read_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config: " + path);
    TrainConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key) || key[0] == '#') continue;
        ls >> value;
        if (value == "=") ls >> value;
        if (value.empty()) throw ValidationError("config: missing value for key '" + key + "'");
        apply_config_entry(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

void write_train_config(const std::string& path, const TrainConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write config: " + path);
    char buf[1024];
    std::snprintf(
        buf, sizeof buf,
        "iterations %d\nlambda_ucn %.17g\ntau %.17g\ndssim_weight %.17g\n"
        "lr_position %.17g\nposition_lr_final_mult %.17g\nlr_sh %.17g\nlr_opacity %.17g\n"
        "lr_scale %.17g\nlr_rotation %.17g\nlr_embed %.17g\nlr_field %.17g\n"
        "densify_interval %d\ndensify_from %d\ndensify_until %d\ndensify_grad_threshold %.17g\n"
        "prune_opacity %.17g\nopacity_reset_interval %d\nmax_gaussians %d\nseed %llu\n"
        "variant %s\nqueue_capacity %d\nucn_flip_sign %d\nscene_extent %.17g\n",
        cfg.iterations, cfg.lambda_ucn, cfg.tau, cfg.dssim_weight, cfg.lr_position,
        cfg.position_lr_final_mult, cfg.lr_sh, cfg.lr_opacity, cfg.lr_scale, cfg.lr_rotation,
        cfg.lr_embed, cfg.lr_field, cfg.densify_interval, cfg.densify_from, cfg.densify_until,
        cfg.densify_grad_threshold, cfg.prune_opacity, cfg.opacity_reset_interval,
        cfg.max_gaussians, (unsigned long long)cfg.seed, variant_name(cfg.variant).c_str(),
        cfg.queue_capacity, cfg.ucn_flip_sign ? 1 : 0, cfg.scene_extent);
    out << buf;
}

// ---- image <-> tensor ----

Tensor image_to_tensor(const Image& img) {
    Tensor t = Tensor::zeros({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.data[size_t((c * img.height + y) * img.width + x)] = img.at(y, x, c);
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("tensor_to_image: expected (3,H,W)");
    Image img(t.dim(2), t.dim(1));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                img.at(y, x, c) =
                    std::clamp(t.data[size_t((c * img.height + y) * img.width + x)], 0.0, 1.0);
    return img;
}

// ---- initialization ----

namespace {
constexpr double kShC0 = 0.28209479177387814;

double knn_mean_dist(const Scene& scene, size_t i, int k) {
    std::vector<double> d2;
    d2.reserve(scene.size());
    const double* p = scene.gaussians[i].pos;
    for (size_t j = 0; j < scene.size(); ++j) {
        if (j == i) continue;
        const double* q = scene.gaussians[j].pos;
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        d2.push_back(dx * dx + dy * dy + dz * dz);
    }
    const int kk = std::min<int>(k, int(d2.size()));
    if (kk == 0) return 0.1;
    std::partial_sort(d2.begin(), d2.begin() + kk, d2.end());
    double acc = 0;
    for (int j = 0; j < kk; ++j) acc += std::sqrt(d2[size_t(j)]);
    return acc / kk;
}
}  // namespace

void TrainState::init(const SynthDataset& ds, const TrainConfig& c) {
    c.validate();
    cfg = c;
    rng.reseed(cfg.seed);
    const VariantFlags fl = variant_flags(cfg.variant);

    // SfM-analogue initialization: ground-truth point positions and DC colors,
    // identity rotations, nearest-neighbor scales, uniform starting opacity.
    scene = Scene{};
    scene.sh_degree = ds.gt.sh_degree;
    scene.embed_dim = 8;
    const int k1 = sh_coeff_count(scene.sh_degree);
    for (const GaussianPrimitive& g0 : ds.gt.gaussians) {
        GaussianPrimitive g = scene.make_primitive();
        std::memcpy(g.pos, g0.pos, sizeof g.pos);
        for (int ch = 0; ch < 3; ++ch) {
            const int k0 = sh_coeff_count(ds.gt.sh_degree);
            g.sh[size_t(ch * k1)] = g0.sh[size_t(ch * k0)];
        }
        g.opacity_mu = logit(0.1);
        g.opacity_sigma_raw = fl.uaoo ? -4.0 : -10.0;
        for (int e = 0; e < scene.embed_dim; ++e) g.embed[size_t(e)] = rng.gauss() * 0.01;
        scene.gaussians.push_back(std::move(g));
    }
    for (size_t i = 0; i < scene.size(); ++i) {
        const double d = std::clamp(knn_mean_dist(scene, i, 3), 1e-4, cfg.scene_extent);
        for (int k = 0; k < 3; ++k) scene.gaussians[i].log_scale[k] = std::log(d);
    }

    if (fl.neural_field) {
        FieldConfig fc;
        fc.sh_degree = scene.sh_degree;
        fc.embed_dim = scene.embed_dim;
        nets.init(fc, rng);
        bank = LatentQueueBank{};
        bank.capacity = cfg.queue_capacity;
        bank.init(ds.spec.styles + 1);
    }

    iteration = 0;
    const size_t n = scene.size();
    const size_t k3 = size_t(scene.coeff_count());
    opt_pos.resize(n * 3);
    opt_rot.resize(n * 4);
    opt_scale.resize(n * 3);
    opt_mu.resize(n);
    opt_sigma.resize(n);
    opt_sh.resize(n * k3);
    opt_embed.resize(n * size_t(scene.embed_dim));
    opt_field.clear();
    if (fl.neural_field)
        for (auto& [name, t] : nets.params()) {
            AdamBuf b;
            b.resize(t->data.size());
            opt_field.push_back(std::move(b));
        }
    grad_accum.assign(n, 0.0);
    grad_count.assign(n, 0);
}

// ---- the training step ----

namespace {
struct AdamStepper {
    double lr;
    double t;  // 1-based step count
    void step(double& p, double g, double& m, double& v) const {
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        p -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
};
}  // namespace

LossBreakdown train_step(TrainState& st, const SynthDataset& ds, int view, int style) {
    const VariantFlags fl = variant_flags(st.cfg.variant);
    if (view < 0 || view >= int(ds.train_cams.size()))
        throw ValidationError("train_step: view index out of range");
    if (style < 0 || style >= int(ds.styles.size()))
        throw ValidationError("train_step: style index out of range");
    const Camera& cam = ds.train_cams[size_t(view)];
    const Image& target_img = ds.train_images[size_t(view)][size_t(style)];
    const size_t n = st.scene.size();
    const int k3 = st.scene.coeff_count();
    const int height = target_img.height, width = target_img.width;

    // fixed per-iteration randomness order: render seed first
    const std::uint64_t render_seed = st.rng.next_u64();

    Tape tape;
    Tensor pos_t = Tensor::zeros({int(n), 3});
    Tensor sh_t = Tensor::zeros({int(n), k3});
    Tensor emb_t = Tensor::zeros({int(n), st.scene.embed_dim});
    for (size_t i = 0; i < n; ++i) {
        const GaussianPrimitive& g = st.scene.gaussians[i];
        for (int c = 0; c < 3; ++c) pos_t.data[i * 3 + c] = g.pos[c];
        for (int c = 0; c < k3; ++c) sh_t.data[i * size_t(k3) + c] = g.sh[size_t(c)];
        for (int c = 0; c < st.scene.embed_dim; ++c)
            emb_t.data[i * size_t(st.scene.embed_dim) + c] = g.embed[size_t(c)];
    }
    pos_t.requires_grad = true;
    sh_t.requires_grad = true;
    emb_t.requires_grad = fl.neural_field;
    Var pos_v = tape.leaf(std::move(pos_t));
    Var sh_v = tape.leaf(std::move(sh_t));

    Var coeffs = sh_v;
    Var q_norm{}, embed_v{};
    FieldNetworks::Lifted lifted;
    Tensor z_detached;
    if (fl.neural_field) {
        // keep the clean-latent pool fresh under the evolving encoder
        if (st.bank.clean_pool.empty() || st.iteration % 100 == 0) {
            const size_t k = size_t(st.rng.below(ds.clean_images.size()));
            Tape ct;
            FieldNetworks::Lifted cl = st.nets.lift(ct, false);
            Var cz = st.nets.encode(ct, cl, ct.constant(image_to_tensor(ds.clean_images[k])));
            st.bank.push_clean(normalize_flat_values(ct.value(cz)));
        }
        lifted = st.nets.lift(tape, true);
        Var z = st.nets.encode(tape, lifted, tape.constant(image_to_tensor(target_img)));
        z_detached = tape.value(z);
        Var fmap = st.nets.decode(tape, lifted, z);
        Var feats = sample_point_features(tape, fmap, pos_v, cam);
        embed_v = tape.leaf(std::move(emb_t));
        Var pe = positional_encoding(tape, pos_v, st.nets.cfg.pe_bands);
        Var mlp_in = tape.concat_cols({feats, embed_v, pe});
        Var v = st.nets.mlp_forward(tape, lifted, mlp_in);
        coeffs = tape.add(sh_v, v);
        q_norm = normalize_flat(tape, z);
    }

    // rasterization as a custom tape op; analytic grads for the non-tape
    // parameter classes (q, s, mu, sigma) are stashed for the update below
    auto ctx = std::make_shared<RenderContext>();
    auto rgrads = std::make_shared<RenderGrads>();
    const RenderMode mode = fl.uaoo ? RenderMode::train_stochastic(render_seed)
                                    : RenderMode::deterministic_mean();
    const double bg[3] = {0, 0, 0};
    const ColorSource src = ColorSource::sh(tape.value(coeffs).data.data(), st.scene.sh_degree);
    RenderOutput out = render(st.scene, cam, src, mode, bg, ctx.get());
    Tensor rendered_chw = Tensor::zeros({3, height, width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                rendered_chw.data[size_t((c * height + y) * width + x)] =
                    out.color[size_t((y * width + x) * 3 + c)];
    Var rendered = tape.custom(
        {coeffs, pos_v}, std::move(rendered_chw),
        [ctx, rgrads, mode, height, width](const Tensor& g, const std::vector<Tensor*>& pg) {
            std::vector<double> dcolor(size_t(height) * width * 3);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x)
                        dcolor[size_t((y * width + x) * 3 + c)] =
                            g.data[size_t((c * height + y) * width + x)];
            render_backward(*ctx, mode, dcolor, nullptr, *rgrads);
            if (pg[0])
                for (size_t i = 0; i < rgrads->color.size(); ++i)
                    pg[0]->data[i] += rgrads->color[i];
            if (pg[1])
                for (size_t i = 0; i < rgrads->pos.size(); ++i) pg[1]->data[i] += rgrads->pos[i];
        });

    Var target_v = tape.constant(image_to_tensor(target_img));
    Var rec = reconstruction_loss(tape, rendered, target_v, st.cfg.dssim_weight);
    Var total = rec;
    Var contra{};
    bool have_contra = false;
    if (fl.neural_field && st.bank.warmed_up(style)) {
        const size_t ci = size_t(st.rng.below(st.bank.clean_pool.size()));
        const std::vector<double>& clean = st.bank.clean_pool[ci];
        Var c_enc = contrastive_loss(tape, q_norm, st.bank, style, st.cfg.tau, clean);
        Tensor noise = Tensor::zeros(z_detached.shape);
        for (double& x : noise.data) x = st.rng.gauss();
        Var zg = st.nets.generate(tape, lifted, tape.constant(std::move(noise)));
        Var c_gen = generator_alignment_loss(tape, normalize_flat(tape, zg), st.bank, st.cfg.tau,
                                             clean);
        contra = tape.add(c_enc, c_gen);
        total = tape.add(total, contra);
        have_contra = true;
    }
    tape.backward(total);

    LossBreakdown bd;
    bd.rec = tape.value(rec).data[0];
    bd.contra = have_contra ? tape.value(contra).data[0] : 0.0;
    bd.ucn = fl.uaoo ? uncertainty_reg_value(st.scene, st.cfg.ucn_flip_sign) : 0.0;
    bd.tape_total = tape.value(total).data[0];
    bd.total = bd.rec + bd.contra + st.cfg.lambda_ucn * bd.ucn;
    bd.psnr = psnr(tensor_to_image(tape.value(rendered)), target_img);

    // gather gradients
    const Tensor gpos = tape.grad(pos_v);
    const Tensor gsh = tape.grad(sh_v);
    const Tensor gemb = fl.neural_field ? tape.grad(embed_v) : Tensor{};
    std::vector<double> gsigma(rgrads->sigma_raw);
    // The uncertainty regularizer is applied as a decoupled update (like AdamW's
    // weight decay) instead of being folded into the Adam gradient. Its gradient is
    // a near-constant -lambda per gaussian, and Adam's magnitude normalization would
    // turn that into a full-learning-rate drift on sigma_raw no matter how small
    // lambda is. Decoupling keeps lambda meaningful: the drift per step is
    // lr_opacity * lambda_ucn.
    std::vector<double> ucn_grad(n, 0.0);
    if (fl.uaoo) uncertainty_reg_grad(st.scene, st.cfg.lambda_ucn, st.cfg.ucn_flip_sign, ucn_grad);

    // Adam updates
    const double t = double(st.iteration + 1);
    const double lr_pos = st.cfg.lr_position * st.cfg.scene_extent *
                          std::pow(st.cfg.position_lr_final_mult,
                                   double(st.iteration) / std::max(1, st.cfg.iterations));
    const AdamStepper pos_step{lr_pos, t};
    const AdamStepper rot_step{st.cfg.lr_rotation, t};
    const AdamStepper scale_step{st.cfg.lr_scale, t};
    const AdamStepper opac_step{st.cfg.lr_opacity, t};
    const AdamStepper sh_step{st.cfg.lr_sh, t};
    const AdamStepper embed_step{st.cfg.lr_embed, t};
    const double lsmin = std::log(kScaleMin), lsmax = std::log(kScaleMax);
    for (size_t i = 0; i < n; ++i) {
        GaussianPrimitive& g = st.scene.gaussians[i];
        for (int c = 0; c < 3; ++c)
            pos_step.step(g.pos[c], gpos.data[i * 3 + c], st.opt_pos.m[i * 3 + c],
                          st.opt_pos.v[i * 3 + c]);
        for (int c = 0; c < 4; ++c)
            rot_step.step(g.rot[c], rgrads->rot[i * 4 + c], st.opt_rot.m[i * 4 + c],
                          st.opt_rot.v[i * 4 + c]);
        double qn = std::sqrt(g.rot[0] * g.rot[0] + g.rot[1] * g.rot[1] + g.rot[2] * g.rot[2] +
                              g.rot[3] * g.rot[3]);
        if (qn < 1e-12) { g.rot[0] = 1; g.rot[1] = g.rot[2] = g.rot[3] = 0; qn = 1; }
        for (int c = 0; c < 4; ++c) g.rot[c] /= qn;
        for (int c = 0; c < 3; ++c) {
            scale_step.step(g.log_scale[c], rgrads->log_scale[i * 3 + c],
                            st.opt_scale.m[i * 3 + c], st.opt_scale.v[i * 3 + c]);
            g.log_scale[c] = std::clamp(g.log_scale[c], lsmin, lsmax);
        }
        opac_step.step(g.opacity_mu, rgrads->mu[i], st.opt_mu.m[i], st.opt_mu.v[i]);
        if (fl.uaoo) {
            opac_step.step(g.opacity_sigma_raw, gsigma[i], st.opt_sigma.m[i], st.opt_sigma.v[i]);
            g.opacity_sigma_raw -= st.cfg.lr_opacity * ucn_grad[i];
        }
        for (int c = 0; c < k3; ++c)
            sh_step.step(g.sh[size_t(c)], gsh.data[i * size_t(k3) + c],
                         st.opt_sh.m[i * size_t(k3) + c], st.opt_sh.v[i * size_t(k3) + c]);
        if (fl.neural_field) {
            for (int c = 0; c < st.scene.embed_dim; ++c) {
                const size_t idx = i * size_t(st.scene.embed_dim) + c;
                embed_step.step(g.embed[size_t(c)], gemb.data[idx], st.opt_embed.m[idx],
                                st.opt_embed.v[idx]);
            }
        }
        // densification statistics
        st.grad_accum[i] += rgrads->screen_grad_norm[i];
        st.grad_count[i] += rgrads->touched[i] ? 1 : 0;
    }
    if (fl.neural_field) {
        const AdamStepper field_step{st.cfg.lr_field, t};
        auto params = st.nets.params();
        for (size_t p = 0; p < params.size(); ++p) {
            const Tensor gf = tape.grad(lifted.vars[p]);
            Tensor& w = *params[p].second;
            for (size_t j = 0; j < w.data.size(); ++j)
                field_step.step(w.data[j], gf.data[j], st.opt_field[p].m[j], st.opt_field[p].v[j]);
        }
        st.bank.push(style, normalize_flat_values(z_detached));
    }

    ++st.iteration;
    return bd;
}

// ---- density control ----

void densify_and_prune(TrainState& st) {
    const size_t n = st.scene.size();
    const int k3 = st.scene.coeff_count();
    const int ed = st.scene.embed_dim;
    const double split_size = 0.01 * st.cfg.scene_extent;

    struct NewEntry {
        GaussianPrimitive g;
        int parent;  // -1: fresh moments; >=0: copy parent's moments
    };
    std::vector<NewEntry> out;
    out.reserve(n + n / 4);
    for (size_t i = 0; i < n; ++i) {
        GaussianPrimitive& g = st.scene.gaussians[i];
        if (opacity_expected(g.opacity_mu, g.opacity_sigma()) < st.cfg.prune_opacity) continue;
        const double avg_grad =
            st.grad_count[i] > 0 ? st.grad_accum[i] / double(st.grad_count[i]) : 0.0;
        const bool densify = avg_grad > st.cfg.densify_grad_threshold &&
                             int(out.size()) + 2 < st.cfg.max_gaussians;
        double max_scale = 0;
        for (int c = 0; c < 3; ++c) max_scale = std::max(max_scale, std::exp(g.log_scale[c]));
        if (!densify) {
            out.push_back({g, int(i)});
        } else if (max_scale <= split_size) {
            // clone: exact copy; the optimizer separates the pair
            out.push_back({g, int(i)});
            out.push_back({g, -1});
        } else {
            // split into two samples from the original, scales divided by 1.6
            const Mat3 r = quat_to_rotmat(g.rot);
            for (int child = 0; child < 2; ++child) {
                GaussianPrimitive c = g;
                Vec3 local{st.rng.gauss() * std::exp(g.log_scale[0]),
                           st.rng.gauss() * std::exp(g.log_scale[1]),
                           st.rng.gauss() * std::exp(g.log_scale[2])};
                const Vec3 off = r * local;
                c.pos[0] += off.x;
                c.pos[1] += off.y;
                c.pos[2] += off.z;
                for (int k = 0; k < 3; ++k) c.log_scale[k] -= std::log(1.6);
                out.push_back({std::move(c), -1});
            }
        }
    }

    Scene next;
    next.sh_degree = st.scene.sh_degree;
    next.embed_dim = st.scene.embed_dim;
    auto remap = [&](AdamBuf& buf, size_t per) {
        AdamBuf nb;
        nb.resize(out.size() * per);
        for (size_t j = 0; j < out.size(); ++j) {
            if (out[j].parent < 0) continue;
            const size_t src = size_t(out[j].parent) * per;
            for (size_t c = 0; c < per; ++c) {
                nb.m[j * per + c] = buf.m[src + c];
                nb.v[j * per + c] = buf.v[src + c];
            }
        }
        buf = std::move(nb);
    };
    remap(st.opt_pos, 3);
    remap(st.opt_rot, 4);
    remap(st.opt_scale, 3);
    remap(st.opt_mu, 1);
    remap(st.opt_sigma, 1);
    remap(st.opt_sh, size_t(k3));
    remap(st.opt_embed, size_t(ed));
    for (NewEntry& e : out) next.gaussians.push_back(std::move(e.g));
    st.scene = std::move(next);
    st.grad_accum.assign(st.scene.size(), 0.0);
    st.grad_count.assign(st.scene.size(), 0);
}

void reset_opacity(TrainState& st) {
    const double cap = logit(0.01);
    for (GaussianPrimitive& g : st.scene.gaussians)
        g.opacity_mu = std::min(g.opacity_mu, cap);
    // stale opacity moments would immediately undo the reset
    std::fill(st.opt_mu.m.begin(), st.opt_mu.m.end(), 0.0);
    std::fill(st.opt_mu.v.begin(), st.opt_mu.v.end(), 0.0);
}

// ---- checkpointing ----

namespace {
void put_u64(std::ostream& o, std::uint64_t v) { o.write(reinterpret_cast<char*>(&v), 8); }
std::uint64_t get_u64(std::istream& i) {
    std::uint64_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
void put_buf(std::ostream& o, const AdamBuf& b) {
    put_u64(o, b.m.size());
    o.write(reinterpret_cast<const char*>(b.m.data()), std::streamsize(b.m.size() * 8));
    o.write(reinterpret_cast<const char*>(b.v.data()), std::streamsize(b.v.size() * 8));
}
AdamBuf get_buf(std::istream& i) {
    AdamBuf b;
    const size_t len = get_u64(i);
    b.m.resize(len);
    b.v.resize(len);
    i.read(reinterpret_cast<char*>(b.m.data()), std::streamsize(len * 8));
    i.read(reinterpret_cast<char*>(b.v.data()), std::streamsize(len * 8));
    return b;
}
}  // namespace

void TrainState::save(const std::string& dir) const {
    fs::create_directories(dir);
    write_train_config((fs::path(dir) / "config.txt").string(), cfg);
    write_scene((fs::path(dir) / "scene.scene").string(), scene);
    const VariantFlags fl = variant_flags(cfg.variant);
    if (fl.neural_field) {
        write_field((fs::path(dir) / "field.bin").string(), nets);
        bank.save((fs::path(dir) / "queues.bin").string());
    }
    std::ofstream out(fs::path(dir) / "optim.bin", std::ios::binary);
    if (!out) throw FormatError("cannot write optimizer state in " + dir);
    out.write("SPLOPTIM", 8);
    put_u64(out, 1);
    put_u64(out, std::uint64_t(iteration));
    put_u64(out, rng.raw_state());
    for (const AdamBuf* b : {&opt_pos, &opt_rot, &opt_scale, &opt_mu, &opt_sigma, &opt_sh,
                             &opt_embed})
        put_buf(out, *b);
    put_u64(out, opt_field.size());
    for (const AdamBuf& b : opt_field) put_buf(out, b);
    put_u64(out, grad_accum.size());
    out.write(reinterpret_cast<const char*>(grad_accum.data()),
              std::streamsize(grad_accum.size() * 8));
    for (int c : grad_count) put_u64(out, std::uint64_t(c));
}

TrainState TrainState::load(const std::string& dir) {
    TrainState st;
    st.cfg = read_train_config((fs::path(dir) / "config.txt").string());
    st.scene = read_scene((fs::path(dir) / "scene.scene").string());
    const VariantFlags fl = variant_flags(st.cfg.variant);
    if (fl.neural_field) {
        read_field((fs::path(dir) / "field.bin").string(), st.nets);
        st.bank = LatentQueueBank::load((fs::path(dir) / "queues.bin").string());
    }
    std::ifstream in(fs::path(dir) / "optim.bin", std::ios::binary);
    if (!in) throw FormatError("cannot open optimizer state in " + dir);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, "SPLOPTIM", 8) != 0)
        throw FormatError("optimizer state: bad magic");
    if (get_u64(in) != 1) throw FormatError("optimizer state: unsupported version");
    st.iteration = int(get_u64(in));
    st.rng.set_raw_state(get_u64(in));
    for (AdamBuf* b : {&st.opt_pos, &st.opt_rot, &st.opt_scale, &st.opt_mu, &st.opt_sigma,
                       &st.opt_sh, &st.opt_embed})
        *b = get_buf(in);
    st.opt_field.resize(get_u64(in));
    for (AdamBuf& b : st.opt_field) b = get_buf(in);
    st.grad_accum.resize(get_u64(in));
    in.read(reinterpret_cast<char*>(st.grad_accum.data()),
            std::streamsize(st.grad_accum.size() * 8));
    st.grad_count.resize(st.grad_accum.size());
    for (int& c : st.grad_count) c = int(get_u64(in));
    if (!in) throw FormatError("optimizer state: truncated");
    return st;
}

// ---- the loop ----

void run_training(const TrainConfig& cfg, const SynthDataset& ds, const std::string& out_dir,
                  std::ostream* log) {
    cfg.validate();
    if (ds.train_cams.empty() || ds.train_images.size() != ds.train_cams.size())
        throw ValidationError("run_training: dataset camera/image count mismatch");
    TrainState st;
    st.init(ds, cfg);
    const VariantFlags fl = variant_flags(cfg.variant);

    fs::create_directories(out_dir);
    std::string metrics;
    char row[256];
    for (int it = 0; it < cfg.iterations; ++it) {
        const int view = int(st.rng.below(std::uint64_t(ds.train_cams.size())));
        const int style = int(st.rng.below(std::uint64_t(ds.styles.size())));
        const LossBreakdown bd = train_step(st, ds, view, style);
        if (!std::isfinite(bd.total))
            throw NumericError("run_training: non-finite loss at iteration " +
                               std::to_string(st.iteration));

        if (st.iteration % 100 == 0) {
            std::snprintf(row, sizeof row, "%d,%.17g,%.17g,%.17g,%.17g\n", st.iteration, bd.rec,
                          bd.contra, bd.ucn, bd.psnr);
            metrics += row;
            if (log) *log << "iter " << st.iteration << " rec " << bd.rec << " contra "
                          << bd.contra << " ucn " << bd.ucn << " psnr " << bd.psnr << " n "
                          << st.scene.size() << "\n";
        }
        if (st.iteration >= cfg.densify_from && st.iteration <= cfg.densify_until &&
            st.iteration % cfg.densify_interval == 0)
            densify_and_prune(st);
        if (fl.por && st.iteration % cfg.opacity_reset_interval == 0 &&
            st.iteration < cfg.iterations)
            reset_opacity(st);
    }

    st.save(out_dir);
    std::ofstream mf(fs::path(out_dir) / "metrics.csv", std::ios::binary);
    mf << "iteration,rec,contra,ucn,psnr\n" << metrics;
}

// ---- inference ----

Tensor encode_image_latent(const FieldNetworks& nets, const Image& img) {
    Tape tape;
    FieldNetworks::Lifted l = nets.lift(tape, false);
    Var z = nets.encode(tape, l, tape.constant(image_to_tensor(img)));
    return tape.value(z);
}

Tensor style_latent(const TrainState& st, const SynthDataset& ds, int style) {
    if (style < 0 || style >= int(ds.styles.size()))
        throw ValidationError("style_latent: style index out of range");
    // The latent is meant to capture the illumination style, not the view it was
    // encoded from, so pool it over every training view of the style.
    Tensor acc = encode_image_latent(st.nets, ds.train_images.at(0).at(size_t(style)));
    for (size_t j = 1; j < ds.train_images.size(); ++j) {
        const Tensor z = encode_image_latent(st.nets, ds.train_images[j].at(size_t(style)));
        for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += z.data[k];
    }
    for (double& v : acc.data) v /= double(ds.train_images.size());
    return acc;
}

namespace {
Image raster_with_coeffs(const Scene& scene, const Camera& cam, const double* coeffs,
                         int degree) {
    const double bg[3] = {0, 0, 0};
    return render(scene, cam, ColorSource::sh(coeffs, degree), RenderMode::inference_expected(),
                  bg)
        .to_image();
}
}  // namespace

Image render_inference(const TrainState& st, const Camera& cam, const Tensor* latent,
                       const Camera& cond_cam) {
    const VariantFlags fl = variant_flags(st.cfg.variant);
    if (latent && fl.neural_field) {
        ColorFieldResult res = evaluate_view_shared_colors(st.scene, st.nets, *latent, cond_cam);
        return raster_with_coeffs(st.scene, cam, res.coeffs.data(), st.scene.sh_degree);
    }
    std::vector<double> coeffs;
    for (const auto& g : st.scene.gaussians) coeffs.insert(coeffs.end(), g.sh.begin(), g.sh.end());
    return raster_with_coeffs(st.scene, cam, coeffs.data(), st.scene.sh_degree);
}

std::vector<EvalRow> evaluate_split(const TrainState& st, const SynthDataset& ds,
                                    bool test_split) {
    const VariantFlags fl = variant_flags(st.cfg.variant);
    const auto& cams = test_split ? ds.test_cams : ds.train_cams;
    const auto& images = test_split ? ds.test_images : ds.train_images;
    if (cams.empty()) throw ValidationError("evaluate_split: split has no views");

    std::vector<EvalRow> rows;
    for (int m = 0; m < int(ds.styles.size()); ++m) {
        std::vector<double> coeffs;
        if (fl.neural_field) {
            // Training conditions on (image, camera) pairs drawn from the train
            // split, so evaluation pools the decoded coefficients over the same
            // distribution. This keeps the result a single view-shared coefficient
            // set per style while averaging away conditioning-view noise.
            for (size_t j = 0; j < ds.train_images.size(); ++j) {
                const Tensor z =
                    encode_image_latent(st.nets, ds.train_images[j].at(size_t(m)));
                std::vector<double> c =
                    evaluate_view_shared_colors(st.scene, st.nets, z, ds.train_cams[j]).coeffs;
                if (coeffs.empty()) coeffs.assign(c.size(), 0.0);
                for (size_t k = 0; k < c.size(); ++k) coeffs[k] += c[k];
            }
            for (double& v : coeffs) v /= double(ds.train_images.size());
        } else {
            for (const auto& g : st.scene.gaussians)
                coeffs.insert(coeffs.end(), g.sh.begin(), g.sh.end());
        }
        for (size_t j = 0; j < cams.size(); ++j) {
            const Image rendered =
                raster_with_coeffs(st.scene, cams[j], coeffs.data(), st.scene.sh_degree);
            const Image& ref = images[j][size_t(m)];
            rows.push_back({int(j), m, psnr(rendered, ref), ssim(rendered, ref)});
        }
    }
    return rows;
}

}  // namespace splat
