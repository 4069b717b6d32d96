#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "splat/field.hpp"
#include "splat/rng.hpp"
#include "splat/scene.hpp"
#include "splat/synthbench.hpp"
#include "splat/tensor.hpp"

namespace splat {

// Ablation switchboard: which of the three mechanisms a variant enables.
enum class Variant { M1, M2, M3, M4, M5, M6 };

struct VariantFlags {
    bool neural_field = false;  // view-shared color field + contrastive latents
    bool uaoo = false;          // stochastic opacity + expected-opacity inference
    bool por = false;           // periodic opacity resetting
};

VariantFlags variant_flags(Variant v);
Variant parse_variant(const std::string& name);  // "M1" .. "M6"
std::string variant_name(Variant v);

struct TrainConfig {
    int iterations = 3000;
    double lambda_ucn = 0.0005;
    double tau = 0.07;
    double dssim_weight = 0.2;

    // learning rates per parameter class (position is scaled by scene_extent
    // and decayed exponentially to position_lr_final_mult of its start)
    double lr_position = 1.6e-4;
    double position_lr_final_mult = 0.01;
    double lr_sh = 2.5e-3;
    double lr_opacity = 5e-2;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_embed = 2.5e-3;
    double lr_field = 1e-3;

    int densify_interval = 300;
    int densify_from = 500;
    int densify_until = 1800;
    double densify_grad_threshold = 2e-4;  // mean per-touch screen-space grad norm
    double prune_opacity = 0.005;
    int opacity_reset_interval = 3000;
    int max_gaussians = 4000;

    std::uint64_t seed = 0;
    Variant variant = Variant::M6;
    int queue_capacity = 64;
    bool ucn_flip_sign = false;  // default keeps the regularizer as printed
    double scene_extent = 1.0;

    void validate() const;  // throws ValidationError
};

// Flat key-value text format; unknown keys raise ValidationError naming them.
TrainConfig read_train_config(const std::string& path);
void write_train_config(const std::string& path, const TrainConfig& cfg);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

struct LossBreakdown {
    double rec = 0, contra = 0, ucn = 0;
    double total = 0;       // rec + contra + lambda_ucn * ucn
    double tape_total = 0;  // the scalar actually differentiated (rec + contra)
    double psnr = 0;        // of this step's render against its target
};

struct AdamBuf {
    std::vector<double> m, v;
    void resize(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

struct TrainState {
    TrainConfig cfg;
    Scene scene;
    FieldNetworks nets;
    LatentQueueBank bank;
    Rng rng{0};
    int iteration = 0;

    // Adam moments per scene parameter class + one buffer per network tensor
    AdamBuf opt_pos, opt_rot, opt_scale, opt_mu, opt_sigma, opt_sh, opt_embed;
    std::vector<AdamBuf> opt_field;

    // densification statistics since the last densify step
    std::vector<double> grad_accum;
    std::vector<int> grad_count;

    void init(const SynthDataset& ds, const TrainConfig& cfg);
    void save(const std::string& dir) const;
    static TrainState load(const std::string& dir);
};

// One optimization step on training image (view, style). Deterministic given
// the state (which carries the RNG).
LossBreakdown train_step(TrainState& st, const SynthDataset& ds, int view, int style);

// Clone/split high-gradient gaussians, prune transparent ones; resets the
// densification statistics.
void densify_and_prune(TrainState& st);

// Periodic opacity reset: caps every mu so S(mu) <= 0.01; sigma untouched.
void reset_opacity(TrainState& st);

// Full loop: uniform (view, style) sampling, metrics row every 100 iterations
// (iteration, L^rec, L^contra, L^ucn, PSNR), checkpoint + metrics.csv written
// into out_dir. `log`, when set, receives progress lines.
void run_training(const TrainConfig& cfg, const SynthDataset& ds, const std::string& out_dir,
                  std::ostream* log = nullptr);

// ---- inference helpers ----

Tensor image_to_tensor(const Image& img);          // (3,H,W)
Image tensor_to_image(const Tensor& t);            // clamped to [0,1]

// Forward-only encoder pass.
Tensor encode_image_latent(const FieldNetworks& nets, const Image& img);

// Latent representing style m: mean encoder latent over the style's training
// images (the latent is view-shared, so conditioning views are pooled).
Tensor style_latent(const TrainState& st, const SynthDataset& ds, int style);

// InferenceExpected render. When `latent` is non-null (and the variant has the
// neural field), per-gaussian colors come from one view-shared field
// evaluation conditioned on cond_cam; otherwise plain scene SH.
Image render_inference(const TrainState& st, const Camera& cam, const Tensor* latent,
                       const Camera& cond_cam);

struct EvalRow {
    int view = 0, style = 0;
    double psnr = 0, ssim = 0;
};
// Per-(view, style) metrics over a split; view-shared colors are evaluated
// once per style and reused for every camera.
std::vector<EvalRow> evaluate_split(const TrainState& st, const SynthDataset& ds, bool test_split);

}  // namespace splat
