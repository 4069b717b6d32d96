#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "splat/camera.hpp"
#include "splat/rng.hpp"
#include "splat/scene.hpp"
#include "splat/tape.hpp"

namespace splat {

struct FieldConfig {
    int latent_channels = 24;   // C_z
    int feature_channels = 16;  // C_f
    int embed_dim = 8;
    int sh_degree = 3;
    int pe_bands = 4;  // sin/cos frequency bands on position; raw value kept
    int mlp_hidden = 64;

    int pe_width() const { return 3 * (1 + 2 * pe_bands); }
    int mlp_input_width() const { return feature_channels + embed_dim + pe_width(); }
    int mlp_output_width() const { return 3 * sh_coeff_count(sh_degree); }
};

struct IlluminationLatent {
    enum class Source { Encoder, Generator, CleanScene };
    Tensor z;  // (C_z, H_z, W_z)
    int style_id = -1;
    Source source = Source::Encoder;
};

// Per-style FIFO queues of detached normalized latents, plus a pool of
// clean-scene latents used as universal negatives.
struct LatentQueueBank {
    int capacity = 64;
    int clean_capacity = 16;
    std::vector<std::deque<std::vector<double>>> queues;
    std::deque<std::vector<double>> clean_pool;

    void init(int style_count) { queues.assign(size_t(style_count), {}); }
    int style_count() const { return int(queues.size()); }

    // FIFO push of a detached normalized latent; evicts the oldest when full.
    void push(int style_id, std::vector<double> z_norm);
    void push_clean(std::vector<double> z_norm);

    bool warmed_up(int style_id) const;
    bool any_entries() const;

    void save(const std::string& path) const;
    static LatentQueueBank load(const std::string& path);
};

struct ConvLayer {
    Tensor w, b;
    int stride = 1, pad = 1;
    bool relu = true;
    bool upsample_before = false;
};

struct DenseLayer {
    Tensor w, b;  // w: (out, in)
    bool relu = true;
};

// Conv autoencoder (image -> latent -> feature map), the color MLP, and the
// noise-to-latent generator. All parameters are plain tensors lifted onto a
// tape per evaluation.
class FieldNetworks {
  public:
    FieldConfig cfg;
    std::vector<ConvLayer> encoder;    // 3 stride-2 blocks
    std::vector<ConvLayer> decoder;    // mirrored, upsample + conv
    std::vector<DenseLayer> mlp;
    std::vector<ConvLayer> generator;  // 5 conv layers, latent-shaped in/out

    // Counts full neural-field evaluations (decode + sample + mlp); the
    // view-shared contract says this happens once per latent.
    mutable std::uint64_t eval_count = 0;

    void init(const FieldConfig& cfg, Rng& rng);

    // Stable (name, tensor) enumeration; order defines the checkpoint layout.
    std::vector<std::pair<std::string, Tensor*>> params();
    std::vector<std::pair<std::string, const Tensor*>> params() const;

    // Tape leaves for every parameter, in params() order.
    struct Lifted {
        std::vector<Var> vars;
    };
    Lifted lift(Tape& tape, bool with_grad) const;

    Var encode(Tape& tape, const Lifted& lift, Var image) const;
    Var decode(Tape& tape, const Lifted& lift, Var z) const;
    Var generate(Tape& tape, const Lifted& lift, Var noise) const;
    Var mlp_forward(Tape& tape, const Lifted& lift, Var input) const;

    // total encoder stride (input dims must be divisible by this)
    int encoder_stride() const;

  private:
    // index bookkeeping into Lifted::vars
    size_t enc_off() const { return 0; }
    size_t dec_off() const { return encoder.size() * 2; }
    size_t mlp_off() const { return dec_off() + decoder.size() * 2; }
    size_t gen_off() const { return mlp_off() + mlp.size() * 2; }
};

// L2-normalized flattened latent (the representation used for similarities).
Var normalize_flat(Tape& tape, Var z);
std::vector<double> normalize_flat_values(const Tensor& z);

// Sinusoidal positional encoding of positions (N,3): raw value plus
// sin/cos at frequencies 2^0 .. 2^(bands-1).
Var positional_encoding(Tape& tape, Var positions, int bands);

// Projects each row of `positions` through the conditioning camera and
// bilinearly samples the feature map (zero padding outside, zero feature for
// points behind the near plane). Differentiable w.r.t. both inputs.
Var sample_point_features(Tape& tape, Var feature_map, Var positions, const Camera& cond_cam);

// InfoNCE-style loss over the queue bank (temperature tau). The query's
// positives are style `style_id`'s queue; every queue entry appears in the
// denominator together with one clean-scene negative.
Var contrastive_loss(Tape& tape, Var query_norm, const LatentQueueBank& bank, int style_id,
                     double tau, const std::vector<double>& clean_latent);

// Same form with the positive set widened to the union of all style queues;
// used to align generator samples with the encoder's latent space.
Var generator_alignment_loss(Tape& tape, Var query_norm, const LatentQueueBank& bank, double tau,
                             const std::vector<double>& clean_latent);

// Forward-only inference path: decode z, sample per-gaussian features through
// cond_cam, run the MLP, and add the residual to the scene's SH coefficients.
// Bumps FieldNetworks::eval_count once.
struct ColorFieldResult {
    std::vector<double> coeffs;  // N * 3*(D+1)^2
    std::uint64_t hash = 0;      // FNV-1a over the coefficient bytes
};
ColorFieldResult evaluate_view_shared_colors(const Scene& scene, const FieldNetworks& nets,
                                             const Tensor& z, const Camera& cond_cam);

void write_field(const std::string& path, const FieldNetworks& nets);
// Rebuilds `nets` from the checkpoint's own stored configuration.
void read_field(const std::string& path, FieldNetworks& nets);

}  // namespace splat
