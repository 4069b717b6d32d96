#include "splat/field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include "splat/common.hpp"
#include "splat/rasterizer.hpp"

namespace splat {

// ---- LatentQueueBank ----

void LatentQueueBank::push(int style_id, std::vector<double> z_norm) {
    if (style_id < 0 || style_id >= style_count())
        throw ContractError("queue_push: unknown style id " + std::to_string(style_id));
    auto& q = queues[size_t(style_id)];
    q.push_front(std::move(z_norm));
    while (int(q.size()) > capacity) q.pop_back();
}

void LatentQueueBank::push_clean(std::vector<double> z_norm) {
    clean_pool.push_front(std::move(z_norm));
    while (int(clean_pool.size()) > clean_capacity) clean_pool.pop_back();
}

bool LatentQueueBank::warmed_up(int style_id) const {
    if (style_id < 0 || style_id >= style_count()) return false;
    return !queues[size_t(style_id)].empty() && !clean_pool.empty();
}

bool LatentQueueBank::any_entries() const {
    for (const auto& q : queues)
        if (!q.empty()) return true;
    return false;
}

namespace {
void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
void put_vecs(std::ostream& out, const std::deque<std::vector<double>>& q) {
    put_u32(out, std::uint32_t(q.size()));
    for (const auto& v : q) {
        put_u32(out, std::uint32_t(v.size()));
        out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 8));
    }
}
std::deque<std::vector<double>> get_vecs(std::istream& in) {
    std::deque<std::vector<double>> q;
    const std::uint32_t n = get_u32(in);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<double> v(get_u32(in));
        in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 8));
        q.push_back(std::move(v));
    }
    return q;
}
}  // namespace

void LatentQueueBank::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write queue bank: " + path);
    out.write("SPLQUEUE", 8);
    put_u32(out, 1);
    put_u32(out, std::uint32_t(capacity));
    put_u32(out, std::uint32_t(clean_capacity));
    put_u32(out, std::uint32_t(queues.size()));
    for (const auto& q : queues) put_vecs(out, q);
    put_vecs(out, clean_pool);
}

LatentQueueBank LatentQueueBank::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open queue bank: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, "SPLQUEUE", 8) != 0)
        throw FormatError("queue bank: bad magic");
    if (get_u32(in) != 1) throw FormatError("queue bank: unsupported version");
    LatentQueueBank bank;
    bank.capacity = int(get_u32(in));
    bank.clean_capacity = int(get_u32(in));
    const std::uint32_t styles = get_u32(in);
    bank.queues.resize(styles);
    for (auto& q : bank.queues) q = get_vecs(in);
    bank.clean_pool = get_vecs(in);
    if (!in) throw FormatError("queue bank: truncated");
    return bank;
}

// ---- FieldNetworks ----

namespace {
Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double std = std::sqrt(2.0 / double(fan_in));
    for (double& x : t.data) x = rng.gauss() * std;
    t.requires_grad = true;
    return t;
}
Tensor zeros_param(std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.requires_grad = true;
    return t;
}
ConvLayer make_conv(int in_ch, int out_ch, int stride, bool relu, bool upsample, Rng& rng) {
    ConvLayer l;
    l.w = he_init({out_ch, in_ch, 3, 3}, in_ch * 9, rng);
    l.b = zeros_param({out_ch});
    l.stride = stride;
    l.pad = 1;
    l.relu = relu;
    l.upsample_before = upsample;
    return l;
}
}  // namespace

void FieldNetworks::init(const FieldConfig& c, Rng& rng) {
    cfg = c;
    encoder.clear();
    encoder.push_back(make_conv(3, 16, 2, true, false, rng));
    encoder.push_back(make_conv(16, 24, 2, true, false, rng));
    encoder.push_back(make_conv(24, c.latent_channels, 2, false, false, rng));

    decoder.clear();
    decoder.push_back(make_conv(c.latent_channels, 24, 1, true, true, rng));
    decoder.push_back(make_conv(24, 16, 1, true, true, rng));
    decoder.push_back(make_conv(16, c.feature_channels, 1, false, true, rng));

    mlp.clear();
    auto dense = [&](int in, int out, bool relu, bool zero) {
        DenseLayer l;
        l.w = zero ? zeros_param({out, in}) : he_init({out, in}, in, rng);
        l.b = zeros_param({out});
        l.relu = relu;
        return l;
    };
    mlp.push_back(dense(c.mlp_input_width(), c.mlp_hidden, true, false));
    mlp.push_back(dense(c.mlp_hidden, c.mlp_hidden, true, false));
    // zero-initialized head: the residual starts at exactly zero, so training
    // begins from plain SH colors
    mlp.push_back(dense(c.mlp_hidden, c.mlp_output_width(), false, true));

    generator.clear();
    generator.push_back(make_conv(c.latent_channels, 32, 1, true, false, rng));
    generator.push_back(make_conv(32, 32, 1, true, false, rng));
    generator.push_back(make_conv(32, 32, 1, true, false, rng));
    generator.push_back(make_conv(32, 32, 1, true, false, rng));
    generator.push_back(make_conv(32, c.latent_channels, 1, false, false, rng));
}

std::vector<std::pair<std::string, Tensor*>> FieldNetworks::params() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto add_convs = [&](const char* prefix, std::vector<ConvLayer>& layers) {
        for (size_t i = 0; i < layers.size(); ++i) {
            out.emplace_back(std::string(prefix) + std::to_string(i) + ".w", &layers[i].w);
            out.emplace_back(std::string(prefix) + std::to_string(i) + ".b", &layers[i].b);
        }
    };
    add_convs("encoder.", encoder);
    add_convs("decoder.", decoder);
    for (size_t i = 0; i < mlp.size(); ++i) {
        out.emplace_back("mlp." + std::to_string(i) + ".w", &mlp[i].w);
        out.emplace_back("mlp." + std::to_string(i) + ".b", &mlp[i].b);
    }
    add_convs("generator.", generator);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> FieldNetworks::params() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<FieldNetworks*>(this)->params()) out.emplace_back(name, t);
    return out;
}

FieldNetworks::Lifted FieldNetworks::lift(Tape& tape, bool with_grad) const {
    Lifted l;
    for (auto& [name, t] : params()) {
        Tensor copy = *t;
        copy.requires_grad = with_grad;
        l.vars.push_back(tape.leaf(std::move(copy)));
    }
    return l;
}

int FieldNetworks::encoder_stride() const {
    int s = 1;
    for (const ConvLayer& l : encoder) s *= l.stride;
    return s;
}

namespace {
Var run_convs(Tape& tape, const std::vector<ConvLayer>& layers, const std::vector<Var>& vars,
              size_t off, Var x) {
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].upsample_before) x = tape.upsample2x(x);
        x = tape.conv2d(x, vars[off + 2 * i], vars[off + 2 * i + 1], layers[i].stride,
                        layers[i].pad);
        if (layers[i].relu) x = tape.relu(x);
    }
    return x;
}
}  // namespace

Var FieldNetworks::encode(Tape& tape, const Lifted& l, Var image) const {
    const Tensor& t = tape.value(image);
    if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("encode: expected (3,H,W) image");
    const int s = encoder_stride();
    if (t.dim(1) % s != 0 || t.dim(2) % s != 0)
        throw ShapeError("encode: image dimensions must be divisible by " + std::to_string(s));
    return run_convs(tape, encoder, l.vars, enc_off(), image);
}

Var FieldNetworks::decode(Tape& tape, const Lifted& l, Var z) const {
    return run_convs(tape, decoder, l.vars, dec_off(), z);
}

Var FieldNetworks::generate(Tape& tape, const Lifted& l, Var noise) const {
    const Tensor& t = tape.value(noise);
    if (t.ndim() != 3 || t.dim(0) != cfg.latent_channels)
        throw ShapeError("generate: noise must have the latent's shape");
    Var out = run_convs(tape, generator, l.vars, gen_off(), noise);
    return out;
}

Var FieldNetworks::mlp_forward(Tape& tape, const Lifted& l, Var input) const {
    const Tensor& t = tape.value(input);
    if (t.ndim() != 2 || t.dim(1) != cfg.mlp_input_width())
        throw ShapeError("mlp_forward: expected (N," + std::to_string(cfg.mlp_input_width()) +
                         ") input");
    Var x = input;
    for (size_t i = 0; i < mlp.size(); ++i) {
        Var w = l.vars[mlp_off() + 2 * i];
        Var b = l.vars[mlp_off() + 2 * i + 1];
        // x (N,in) * w^T (in,out): emulate via matmul with transposed weight
        const Tensor& wt = tape.value(w);
        const int out_dim = wt.dim(0), in_dim = wt.dim(1);
        // build transpose as a custom op to keep the weight layout (out,in)
        Tensor trans = Tensor::zeros({in_dim, out_dim});
        const Tensor& wv = tape.value(w);
        for (int r = 0; r < out_dim; ++r)
            for (int c = 0; c < in_dim; ++c)
                trans.data[size_t(c * out_dim + r)] = wv.data[size_t(r * in_dim + c)];
        Var wT = tape.custom({w}, std::move(trans),
                             [out_dim, in_dim](const Tensor& g, const std::vector<Tensor*>& pg) {
                                 if (!pg[0]) return;
                                 for (int r = 0; r < out_dim; ++r)
                                     for (int c = 0; c < in_dim; ++c)
                                         pg[0]->data[size_t(r * in_dim + c)] +=
                                             g.data[size_t(c * out_dim + r)];
                             });
        x = tape.add_rowvec(tape.matmul(x, wT), b);
        if (mlp[i].relu) x = tape.relu(x);
    }
    return x;
}

// ---- free tape helpers ----

Var normalize_flat(Tape& tape, Var z) {
    const Tensor& t = tape.value(z);
    Var flat = tape.custom({z}, Tensor({t.numel()}, t.data),
                           [](const Tensor& g, const std::vector<Tensor*>& pg) {
                               if (!pg[0]) return;
                               for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i];
                           });
    Var n2 = tape.dot(flat, flat);
    Var inv_norm = tape.div(tape.constant(Tensor::scalar(1.0)),
                            tape.sqrt(tape.add_scalar(n2, 1e-24)));
    // broadcast multiply by the scalar
    const Tensor& fv = tape.value(flat);
    Tensor out({fv.numel()}, fv.data);
    const double s = tape.value(inv_norm).data[0];
    for (double& x : out.data) x *= s;
    return tape.custom(
        {flat, inv_norm}, std::move(out),
        [fvals = tape.value(flat).data, sval = s](const Tensor& g, const std::vector<Tensor*>& pg) {
            if (pg[0])
                for (size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i] * sval;
            if (pg[1]) {
                double acc = 0.0;
                for (size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * fvals[i];
                pg[1]->data[0] += acc;
            }
        });
}

std::vector<double> normalize_flat_values(const Tensor& z) {
    double n2 = 1e-24;
    for (double x : z.data) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<double> out(z.data);
    for (double& x : out) x *= inv;
    return out;
}

Var positional_encoding(Tape& tape, Var positions, int bands) {
    const Tensor& t = tape.value(positions);
    if (t.ndim() != 2 || t.dim(1) != 3) throw ShapeError("positional_encoding: expected (N,3)");
    std::vector<Var> parts;
    parts.push_back(positions);
    for (int l = 0; l < bands; ++l) {
        Var scaled = tape.mul_scalar(positions, double(1 << l));
        parts.push_back(tape.sin(scaled));
        parts.push_back(tape.cos(scaled));
    }
    return tape.concat_cols(parts);
}

Var sample_point_features(Tape& tape, Var feature_map, Var positions, const Camera& cond_cam) {
    const Tensor& f = tape.value(feature_map);
    const Tensor& x = tape.value(positions);
    if (f.ndim() != 3) throw ShapeError("sample_point_features: feature map must be (C,H,W)");
    if (x.ndim() != 2 || x.dim(1) != 3) throw ShapeError("sample_point_features: positions must be (N,3)");
    const int C = f.dim(0), H = f.dim(1), W = f.dim(2);
    const int N = x.dim(0);
    const Mat3 rot = cond_cam.rotation();
    const double fx = cond_cam.fx(), fy = cond_cam.fy();
    const double cx = cond_cam.cx(), cy = cond_cam.cy();

    struct Sample {
        bool valid = false;
        double gx = 0, gy = 0;       // grid coords (pixel centers at integers)
        Vec3 t;                      // view-space point
    };
    auto samples = std::make_shared<std::vector<Sample>>(size_t(N));
    Tensor out = Tensor::zeros({N, C});

    auto tap = [&](int yy, int xx, int c) -> double {
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
        return f.data[size_t((c * H + yy) * W + xx)];
    };

    for (int i = 0; i < N; ++i) {
        const Vec3 p{x.data[size_t(i * 3)], x.data[size_t(i * 3 + 1)], x.data[size_t(i * 3 + 2)]};
        const Vec3 t = cond_cam.to_view(p);
        if (t.z <= kZNear) continue;  // defined boundary: zero feature
        Sample& s = (*samples)[size_t(i)];
        s.valid = true;
        s.t = t;
        s.gx = fx * t.x / t.z + cx - 0.5;
        s.gy = fy * t.y / t.z + cy - 0.5;
        const int x0 = int(std::floor(s.gx)), y0 = int(std::floor(s.gy));
        const double tx = s.gx - x0, ty = s.gy - y0;
        for (int c = 0; c < C; ++c) {
            const double v = (1 - tx) * (1 - ty) * tap(y0, x0, c) + tx * (1 - ty) * tap(y0, x0 + 1, c) +
                             (1 - tx) * ty * tap(y0 + 1, x0, c) + tx * ty * tap(y0 + 1, x0 + 1, c);
            out.data[size_t(i * C + c)] = v;
        }
    }

    // capture feature values for the uv-gradient
    auto fdata = std::make_shared<std::vector<double>>(f.data);
    return tape.custom(
        {feature_map, positions}, std::move(out),
        [samples, fdata, C, H, W, N, rot, fx, fy](const Tensor& g, const std::vector<Tensor*>& pg) {
            auto tapv = [&](int yy, int xx, int c) -> double {
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
                return (*fdata)[size_t((c * H + yy) * W + xx)];
            };
            for (int i = 0; i < N; ++i) {
                const Sample& s = (*samples)[size_t(i)];
                if (!s.valid) continue;
                const int x0 = int(std::floor(s.gx)), y0 = int(std::floor(s.gy));
                const double tx = s.gx - x0, ty = s.gy - y0;
                double dgx = 0, dgy = 0;
                for (int c = 0; c < C; ++c) {
                    const double go = g.data[size_t(i * C + c)];
                    if (go == 0) continue;
                    if (pg[0]) {
                        auto scatter = [&](int yy, int xx, double wgt) {
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) return;
                            pg[0]->data[size_t((c * H + yy) * W + xx)] += go * wgt;
                        };
                        scatter(y0, x0, (1 - tx) * (1 - ty));
                        scatter(y0, x0 + 1, tx * (1 - ty));
                        scatter(y0 + 1, x0, (1 - tx) * ty);
                        scatter(y0 + 1, x0 + 1, tx * ty);
                    }
                    dgx += go * ((1 - ty) * (tapv(y0, x0 + 1, c) - tapv(y0, x0, c)) +
                                 ty * (tapv(y0 + 1, x0 + 1, c) - tapv(y0 + 1, x0, c)));
                    dgy += go * ((1 - tx) * (tapv(y0 + 1, x0, c) - tapv(y0, x0, c)) +
                                 tx * (tapv(y0 + 1, x0 + 1, c) - tapv(y0, x0 + 1, c)));
                }
                if (pg[1] && (dgx != 0 || dgy != 0)) {
                    const double tz = s.t.z;
                    Vec3 dt{dgx * fx / tz, dgy * fy / tz,
                            -dgx * fx * s.t.x / (tz * tz) - dgy * fy * s.t.y / (tz * tz)};
                    const Vec3 dp = rot.transposed_mul(dt);
                    pg[1]->data[size_t(i * 3 + 0)] += dp.x;
                    pg[1]->data[size_t(i * 3 + 1)] += dp.y;
                    pg[1]->data[size_t(i * 3 + 2)] += dp.z;
                }
            }
        });
}

// ---- contrastive objectives ----

namespace {
Var queue_loss(Tape& tape, Var q, const LatentQueueBank& bank, int positive_style,
               bool positives_all_styles, double tau, const std::vector<double>& clean_latent) {
    if (clean_latent.empty()) throw ContractError("contrastive loss: empty clean latent");
    Var num;  // sum of exp(sim/tau) over positives
    Var den;  // over everything
    bool have_num = false, have_den = false;
    const double inv_tau = 1.0 / tau;
    for (int m = 0; m < bank.style_count(); ++m) {
        for (const auto& entry : bank.queues[size_t(m)]) {
            Var e = tape.constant(Tensor({int(entry.size())}, entry));
            Var term = tape.exp(tape.mul_scalar(tape.dot(q, e), inv_tau));
            den = have_den ? tape.add(den, term) : term;
            have_den = true;
            if (positives_all_styles || m == positive_style) {
                num = have_num ? tape.add(num, term) : term;
                have_num = true;
            }
        }
    }
    if (!have_num)
        throw ContractError("contrastive loss: positive queue is empty (warm up queues first)");
    Var cl = tape.constant(Tensor({int(clean_latent.size())}, clean_latent));
    Var neg = tape.exp(tape.mul_scalar(tape.dot(q, cl), inv_tau));
    den = tape.add(den, neg);
    return tape.sub(tape.log(den), tape.log(num));  // = -log(num/den)
}
}  // namespace

Var contrastive_loss(Tape& tape, Var query_norm, const LatentQueueBank& bank, int style_id,
                     double tau, const std::vector<double>& clean_latent) {
    if (style_id < 0 || style_id >= bank.style_count())
        throw ContractError("contrastive_loss: unknown style id");
    return queue_loss(tape, query_norm, bank, style_id, false, tau, clean_latent);
}

Var generator_alignment_loss(Tape& tape, Var query_norm, const LatentQueueBank& bank, double tau,
                             const std::vector<double>& clean_latent) {
    if (!bank.any_entries())
        throw ContractError("generator_alignment_loss: bank has no entries");
    return queue_loss(tape, query_norm, bank, -1, true, tau, clean_latent);
}

// ---- inference path ----

ColorFieldResult evaluate_view_shared_colors(const Scene& scene, const FieldNetworks& nets,
                                             const Tensor& z, const Camera& cond_cam) {
    Tape tape;
    FieldNetworks::Lifted lifted = nets.lift(tape, /*with_grad=*/false);
    Var zv = tape.constant(z);
    Var feat_map = nets.decode(tape, lifted, zv);

    const size_t n = scene.size();
    Tensor pos = Tensor::zeros({int(n), 3});
    Tensor emb = Tensor::zeros({int(n), nets.cfg.embed_dim});
    for (size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) pos.data[i * 3 + c] = scene.gaussians[i].pos[c];
        for (int c = 0; c < nets.cfg.embed_dim; ++c)
            emb.data[i * size_t(nets.cfg.embed_dim) + c] = scene.gaussians[i].embed[c];
    }
    Var pos_v = tape.constant(std::move(pos));
    Var feats = sample_point_features(tape, feat_map, pos_v, cond_cam);
    Var pe = positional_encoding(tape, pos_v, nets.cfg.pe_bands);
    Var mlp_in = tape.concat_cols({feats, tape.constant(std::move(emb)), pe});
    Var v = nets.mlp_forward(tape, lifted, mlp_in);
    nets.eval_count += 1;

    const Tensor& vt = tape.value(v);
    const int k3 = nets.cfg.mlp_output_width();
    ColorFieldResult res;
    res.coeffs.resize(n * size_t(k3));
    for (size_t i = 0; i < n; ++i)
        for (int c = 0; c < k3; ++c)
            res.coeffs[i * size_t(k3) + c] = scene.gaussians[i].sh[size_t(c)] + vt.data[i * size_t(k3) + c];

    // FNV-1a over the raw bytes
    std::uint64_t h = 1469598103934665603ull;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(res.coeffs.data());
    for (size_t i = 0; i < res.coeffs.size() * 8; ++i) h = (h ^ bytes[i]) * 1099511628211ull;
    res.hash = h;
    return res;
}

// ---- checkpoint ----

void write_field(const std::string& path, const FieldNetworks& nets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write field checkpoint: " + path);
    out.write("SPLFIELD", 8);
    put_u32(out, 1);
    const std::int32_t meta[6] = {nets.cfg.latent_channels, nets.cfg.feature_channels,
                                  nets.cfg.embed_dim,      nets.cfg.sh_degree,
                                  nets.cfg.pe_bands,       nets.cfg.mlp_hidden};
    out.write(reinterpret_cast<const char*>(meta), sizeof meta);
    auto ps = nets.params();
    put_u32(out, std::uint32_t(ps.size()));
    for (auto& [name, t] : ps) {
        put_u32(out, std::uint32_t(t->ndim()));
        for (int d : t->shape) put_u32(out, std::uint32_t(d));
        out.write(reinterpret_cast<const char*>(t->data.data()), std::streamsize(t->data.size() * 8));
    }
}

void read_field(const std::string& path, FieldNetworks& nets) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open field checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, "SPLFIELD", 8) != 0)
        throw FormatError("field checkpoint: bad magic");
    if (get_u32(in) != 1) throw FormatError("field checkpoint: unsupported version");
    std::int32_t meta[6];
    in.read(reinterpret_cast<char*>(meta), sizeof meta);
    FieldConfig c;
    c.latent_channels = meta[0];
    c.feature_channels = meta[1];
    c.embed_dim = meta[2];
    c.sh_degree = meta[3];
    c.pe_bands = meta[4];
    c.mlp_hidden = meta[5];
    Rng dummy(0);
    nets.init(c, dummy);
    auto ps = nets.params();
    const std::uint32_t count = get_u32(in);
    if (count != ps.size()) throw FormatError("field checkpoint: tensor count mismatch");
    for (auto& [name, t] : ps) {
        const std::uint32_t nd = get_u32(in);
        if (int(nd) != t->ndim()) throw FormatError("field checkpoint: rank mismatch in " + name);
        for (int d : t->shape)
            if (get_u32(in) != std::uint32_t(d))
                throw FormatError("field checkpoint: shape mismatch in " + name);
        in.read(reinterpret_cast<char*>(t->data.data()), std::streamsize(t->data.size() * 8));
    }
    if (!in) throw FormatError("field checkpoint: truncated");
}

}  // namespace splat
