// splatlab: synthetic-benchmark generation, training, rendering, evaluation,
// and gradient-check workflows for the splatting engine.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splat/common.hpp"
#include "splat/field.hpp"
#include "splat/gradcheck.hpp"
#include "splat/metrics.hpp"
#include "splat/rasterizer.hpp"
#include "splat/synthbench.hpp"
#include "splat/trainer.hpp"

namespace fs = std::filesystem;
using namespace splat;

namespace {

int cmd_synth(const std::string& out, int gaussians, int views, int test_views, int styles,
              const std::string& size, std::uint64_t seed, double jitter, double extent,
              int clean, bool force) {
    SynthSpec spec;
    spec.gaussian_count = gaussians;
    spec.train_views = views;
    spec.test_views = test_views;
    spec.styles = styles;
    spec.seed = seed;
    spec.jitter_amp = jitter;
    spec.extent = extent;
    spec.clean_images = clean;
    if (std::sscanf(size.c_str(), "%dx%d", &spec.width, &spec.height) != 2 || spec.width < 16 ||
        spec.height < 16)
        throw ValidationError("--size must look like 64x64 (min 16x16)");
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw ValidationError("output directory '" + out + "' is not empty (use --force)");
    write_dataset(out, make_dataset(spec));
    std::cout << "wrote dataset to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& config,
              const std::string& variant, long long seed) {
    TrainConfig cfg;
    if (!config.empty()) cfg = read_train_config(config);
    if (!variant.empty()) cfg.variant = parse_variant(variant);
    if (seed >= 0) cfg.seed = std::uint64_t(seed);
    SynthDataset ds = read_dataset(data);
    cfg.scene_extent = ds.spec.extent;
    run_training(cfg, ds, out, &std::cout);
    fs::copy_file(fs::path(data) / "cameras.txt", fs::path(out) / "cameras.txt",
                  fs::copy_options::overwrite_existing);
    std::cout << "wrote checkpoint to " << out << "\n";
    return 0;
}

Tensor latent_from_spec(const TrainState& st, const std::vector<std::string>& spec) {
    if (spec.size() != 2)
        throw ValidationError("--latent expects two values: from-image PATH | sample SEED | "
                              "style-queue M");
    const std::string& kind = spec[0];
    if (kind == "from-image") return encode_image_latent(st.nets, read_ppm(spec[1]));
    if (kind == "sample") {
        const std::uint64_t seed = std::stoull(spec[1]);
        // noise shaped like the latent; spatial size follows the queue entries
        // when available, else the encoder default for 64x64 inputs
        int hw = 8;
        for (const auto& q : st.bank.queues)
            if (!q.empty()) {
                hw = int(std::lround(std::sqrt(double(q.front().size()) /
                                               st.nets.cfg.latent_channels)));
                break;
            }
        Tensor noise = Tensor::zeros({st.nets.cfg.latent_channels, hw, hw});
        Rng rng(seed);
        for (double& x : noise.data) x = rng.gauss();
        Tape tape;
        FieldNetworks::Lifted l = st.nets.lift(tape, false);
        return tape.value(st.nets.generate(tape, l, tape.constant(std::move(noise))));
    }
    if (kind == "style-queue") {
        const int m = std::stoi(spec[1]);
        if (m < 0 || m >= st.bank.style_count() || st.bank.queues[size_t(m)].empty())
            throw ValidationError("style-queue: no stored latents for style " + spec[1]);
        const auto& q = st.bank.queues[size_t(m)];
        std::vector<double> mean(q.front().size(), 0.0);
        for (const auto& e : q)
            for (size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
        for (double& x : mean) x /= double(q.size());
        const int hw = int(std::lround(std::sqrt(double(mean.size()) /
                                                 st.nets.cfg.latent_channels)));
        return Tensor({st.nets.cfg.latent_channels, hw, hw}, std::move(mean));
    }
    throw ValidationError("--latent kind must be from-image, sample, or style-queue");
}

int cmd_render(const std::string& ckpt, int camera_idx, const std::vector<std::string>& latent,
               const std::string& out) {
    TrainState st = TrainState::load(ckpt);
    const auto cams = read_camera_set((fs::path(ckpt) / "cameras.txt").string());
    if (camera_idx < 0 || camera_idx >= int(cams.size()))
        throw ValidationError("--camera index out of range (checkpoint has " +
                              std::to_string(cams.size()) + " cameras)");
    const VariantFlags fl = variant_flags(st.cfg.variant);
    if (!latent.empty() && !fl.neural_field)
        throw ValidationError("checkpoint variant " + variant_name(st.cfg.variant) +
                              " has no neural field; omit --latent");
    if (!latent.empty()) {
        const Tensor z = latent_from_spec(st, latent);
        const ColorFieldResult res = evaluate_view_shared_colors(st.scene, st.nets, z, cams[0]);
        char hash[32];
        std::snprintf(hash, sizeof hash, "%016llx", (unsigned long long)res.hash);
        std::cout << "feature_hash " << hash << "\n";
        const double bg[3] = {0, 0, 0};
        write_ppm(out, render(st.scene, cams[size_t(camera_idx)],
                              ColorSource::sh(res.coeffs.data(), st.scene.sh_degree),
                              RenderMode::inference_expected(), bg)
                           .to_image());
    } else {
        write_ppm(out, render_inference(st, cams[size_t(camera_idx)], nullptr, cams[0]));
    }
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split) {
    if (split != "test" && split != "train")
        throw ValidationError("--split must be 'test' or 'train'");
    TrainState st = TrainState::load(ckpt);
    SynthDataset ds = read_dataset(data);
    const auto rows = evaluate_split(st, ds, split == "test");
    char buf[128];
    std::cout << "view,style,psnr,ssim\n";
    double psnr_sum = 0, ssim_sum = 0;
    for (const EvalRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f\n", r.view, r.style, r.psnr, r.ssim);
        std::cout << buf;
        psnr_sum += r.psnr;
        ssim_sum += r.ssim;
    }
    std::snprintf(buf, sizeof buf, "avg,,%.6f,%.6f\n", psnr_sum / double(rows.size()),
                  ssim_sum / double(rows.size()));
    std::cout << buf;
    return 0;
}

int cmd_check_grad(std::uint64_t seed, const std::string& cases) {
    const auto suites = run_gradcheck(cases, seed);
    bool ok = true;
    for (const SuiteResult& s : suites) {
        std::cout << s.name << ": " << (s.ok ? "PASS" : "FAIL") << " (" << s.checked
                  << " gradients)";
        if (!s.ok) std::cout << " — " << s.failure;
        std::cout << "\n";
        ok = ok && s.ok;
    }
    return ok ? 0 : 1;
}

int cmd_inspect(const std::string& path) {
    if (fs::is_directory(path)) {
        if (fs::exists(fs::path(path) / "manifest.txt")) {
            SynthDataset ds = read_dataset(path);
            std::cout << "synthbench dataset: " << ds.gt.size() << " gaussians, "
                      << ds.train_cams.size() << " train + " << ds.test_cams.size()
                      << " test views, " << ds.styles.size() << " style groups, "
                      << ds.spec.width << "x" << ds.spec.height << ", seed " << ds.spec.seed
                      << "\n";
            return 0;
        }
        if (fs::exists(fs::path(path) / "config.txt")) {
            TrainState st = TrainState::load(path);
            std::cout << "checkpoint: variant " << variant_name(st.cfg.variant) << ", iteration "
                      << st.iteration << ", " << st.scene.size() << " gaussians, sh degree "
                      << st.scene.sh_degree << "\n";
            if (variant_flags(st.cfg.variant).neural_field) {
                size_t stored = 0;
                for (const auto& q : st.bank.queues) stored += q.size();
                std::cout << "  queues: " << st.bank.style_count() << " styles, " << stored
                          << " stored latents, " << st.bank.clean_pool.size()
                          << " clean latents\n";
            }
            return 0;
        }
        throw ValidationError("directory is neither a dataset nor a checkpoint: " + path);
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    char magic[8] = {};
    in.read(magic, 8);
    const std::string m(magic, magic + in.gcount());
    if (m.rfind("SPLSCENE", 0) == 0) {
        Scene s = read_scene(path);
        std::cout << "scene: " << s.size() << " gaussians, sh degree " << s.sh_degree
                  << ", embed dim " << s.embed_dim << "\n";
    } else if (m.rfind("P6", 0) == 0) {
        Image img = read_ppm(path);
        std::cout << "ppm image: " << img.width << "x" << img.height << "\n";
    } else if (m.rfind("SPLATCAM", 0) == 0) {
        std::cout << "camera set: " << read_camera_set(path).size() << " cameras\n";
    } else {
        throw FormatError("unrecognized file type: " + path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale differentiable gaussian splatting"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-style dataset");
    const SynthSpec spec_defaults;
    std::string s_out, s_size = "64x64";
    int s_gaussians = spec_defaults.gaussian_count, s_views = spec_defaults.train_views,
        s_test = spec_defaults.test_views, s_styles = spec_defaults.styles,
        s_clean = spec_defaults.clean_images;
    std::uint64_t s_seed = 0;
    double s_jitter = spec_defaults.jitter_amp, s_extent = spec_defaults.extent;
    bool s_force = false;
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--gaussians", s_gaussians);
    synth->add_option("--views", s_views, "training views");
    synth->add_option("--test-views", s_test);
    synth->add_option("--styles", s_styles, "non-identity styles (groups = styles+1)");
    synth->add_option("--size", s_size, "WxH");
    synth->add_option("--seed", s_seed);
    synth->add_option("--jitter", s_jitter, "cross-view jitter amplitude");
    synth->add_option("--extent", s_extent);
    synth->add_option("--clean", s_clean, "clean-scene image count");
    synth->add_flag("--force", s_force, "overwrite a non-empty directory");

    // train
    auto* train = app.add_subcommand("train", "optimize a scene on a dataset");
    std::string t_data, t_out, t_config, t_variant;
    long long t_seed = -1;
    train->add_option("--data", t_data)->required();
    train->add_option("--out", t_out)->required();
    train->add_option("--config", t_config, "flat key-value config file");
    train->add_option("--variant", t_variant, "M1..M6");
    train->add_option("--seed", t_seed);

    // render
    auto* rnd = app.add_subcommand("render", "render one camera from a checkpoint");
    std::string r_ckpt, r_out;
    int r_camera = -1;
    std::vector<std::string> r_latent;
    rnd->add_option("--ckpt", r_ckpt)->required();
    rnd->add_option("--camera", r_camera, "camera index")->required();
    rnd->add_option("--latent", r_latent, "from-image PATH | sample SEED | style-queue M")
        ->expected(2);
    rnd->add_option("--out", r_out)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "metrics over a dataset split");
    std::string e_ckpt, e_data, e_split;
    ev->add_option("--ckpt", e_ckpt)->required();
    ev->add_option("--data", e_data)->required();
    ev->add_option("--split", e_split, "test | train")->required();

    // check-grad
    auto* cg = app.add_subcommand("check-grad", "finite-difference gradient suites");
    std::uint64_t g_seed = 0;
    std::string g_cases = "all";
    cg->add_option("--seed", g_seed);
    cg->add_option("--cases", g_cases, "all | opacity | rasterizer | field");

    // inspect
    auto* ins = app.add_subcommand("inspect", "describe a dataset, checkpoint, or file");
    std::string i_path;
    ins->add_option("path", i_path)->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed())
            return cmd_synth(s_out, s_gaussians, s_views, s_test, s_styles, s_size, s_seed,
                             s_jitter, s_extent, s_clean, s_force);
        if (train->parsed()) return cmd_train(t_data, t_out, t_config, t_variant, t_seed);
        if (rnd->parsed()) return cmd_render(r_ckpt, r_camera, r_latent, r_out);
        if (ev->parsed()) return cmd_eval(e_ckpt, e_data, e_split);
        if (cg->parsed()) return cmd_check_grad(g_seed, g_cases);
        if (ins->parsed()) return cmd_inspect(i_path);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
