#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "splat/common.hpp"
#include "splat/losses.hpp"
#include "splat/metrics.hpp"
#include "splat/rng.hpp"
#include "splat/scalar.hpp"
#include "splat/synthbench.hpp"
#include "splat/trainer.hpp"

using namespace splat;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

SynthDataset tiny_dataset(std::uint64_t seed = 3) {
    SynthSpec spec;
    spec.gaussian_count = 40;
    spec.train_views = 4;
    spec.test_views = 2;
    spec.styles = 2;
    spec.width = 32;
    spec.height = 32;
    spec.clean_images = 3;
    spec.seed = seed;
    return make_dataset(spec);
}

TrainConfig tiny_config(Variant v = Variant::M6) {
    TrainConfig cfg;
    cfg.variant = v;
    cfg.iterations = 10;
    cfg.densify_from = 1000000;  // keep the gaussian count fixed for these tests
    cfg.seed = 5;
    return cfg;
}

bool scenes_identical(const Scene& a, const Scene& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.gaussians[i];
        const auto& y = b.gaussians[i];
        for (int c = 0; c < 3; ++c)
            if (x.pos[c] != y.pos[c] || x.log_scale[c] != y.log_scale[c]) return false;
        for (int c = 0; c < 4; ++c)
            if (x.rot[c] != y.rot[c]) return false;
        if (x.opacity_mu != y.opacity_mu || x.opacity_sigma_raw != y.opacity_sigma_raw)
            return false;
        if (x.sh != y.sh || x.embed != y.embed) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config parsing names unknown keys") {
    TrainConfig cfg;
    try {
        apply_config_entry(cfg, "learning_rate", "0.1");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("unknown key 'learning_rate'") != std::string::npos);
    }
    apply_config_entry(cfg, "tau", "0.11");
    CHECK(cfg.tau == 0.11);
    apply_config_entry(cfg, "variant", "M2");
    CHECK(cfg.variant == Variant::M2);
}

TEST_CASE("config round-trips through its text file") {
    TrainConfig cfg;
    cfg.iterations = 1234;
    cfg.lambda_ucn = 3.25e-4;
    cfg.tau = 0.123;
    cfg.lr_position = 7e-5;
    cfg.variant = Variant::M4;
    cfg.ucn_flip_sign = true;
    cfg.seed = 987654321;
    cfg.scene_extent = 2.5;
    const std::string path = (fs::temp_directory_path() / "cfg.txt").string();
    write_train_config(path, cfg);
    const TrainConfig back = read_train_config(path);
    CHECK(back.iterations == cfg.iterations);
    CHECK(back.lambda_ucn == cfg.lambda_ucn);
    CHECK(back.tau == cfg.tau);
    CHECK(back.lr_position == cfg.lr_position);
    CHECK(back.variant == Variant::M4);
    CHECK(back.ucn_flip_sign == cfg.ucn_flip_sign);
    CHECK(back.seed == cfg.seed);
    CHECK(back.scene_extent == cfg.scene_extent);
}

TEST_CASE("variant switchboard") {
    auto flags = [](Variant v) { return variant_flags(v); };
    CHECK_FALSE(flags(Variant::M1).neural_field);
    CHECK_FALSE(flags(Variant::M1).uaoo);
    CHECK(flags(Variant::M1).por);
    CHECK(flags(Variant::M2).neural_field);
    CHECK_FALSE(flags(Variant::M2).uaoo);
    CHECK(flags(Variant::M2).por);
    CHECK(flags(Variant::M3).neural_field);
    CHECK(flags(Variant::M3).uaoo);
    CHECK(flags(Variant::M3).por);
    CHECK_FALSE(flags(Variant::M4).neural_field);
    CHECK(flags(Variant::M4).uaoo);
    CHECK(flags(Variant::M4).por);
    CHECK_FALSE(flags(Variant::M5).neural_field);
    CHECK(flags(Variant::M5).uaoo);
    CHECK_FALSE(flags(Variant::M5).por);
    CHECK(flags(Variant::M6).neural_field);
    CHECK(flags(Variant::M6).uaoo);
    CHECK_FALSE(flags(Variant::M6).por);

    CHECK(parse_variant("M3") == Variant::M3);
    CHECK(variant_name(Variant::M5) == "M5");
    CHECK_THROWS_AS(parse_variant("M7"), ValidationError);
}

TEST_CASE("reconstruction loss agrees with an independent reimplementation") {
    Rng rng(41);
    const int H = 16, W = 16;
    Tensor a = Tensor::zeros({3, H, W}), b = Tensor::zeros({3, H, W});
    for (double& v : a.data) v = rng.uniform(0, 1);
    for (double& v : b.data) v = rng.uniform(0, 1);

    // independent L1
    double l1 = 0;
    for (size_t i = 0; i < a.data.size(); ++i) l1 += std::abs(a.data[i] - b.data[i]);
    l1 /= double(a.data.size());

    // independent SSIM: 11x11 gaussian window, valid positions only
    const int R = 5;
    std::vector<double> win(11 * 11);
    double wsum = 0;
    for (int y = -R; y <= R; ++y)
        for (int x = -R; x <= R; ++x) {
            const double w = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
            win[size_t((y + R) * 11 + (x + R))] = w;
            wsum += w;
        }
    for (double& w : win) w /= wsum;
    const double C1 = 1e-4, C2 = 9e-4;
    double ssim_acc = 0;
    int ssim_cnt = 0;
    for (int c = 0; c < 3; ++c)
        for (int cy = R; cy < H - R; ++cy)
            for (int cx = R; cx < W - R; ++cx) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int dy = -R; dy <= R; ++dy)
                    for (int dx = -R; dx <= R; ++dx) {
                        const double w = win[size_t((dy + R) * 11 + (dx + R))];
                        const double pa = a.data[size_t((c * H + cy + dy) * W + cx + dx)];
                        const double pb = b.data[size_t((c * H + cy + dy) * W + cx + dx)];
                        ma += w * pa;
                        mb += w * pb;
                        va += w * pa * pa;
                        vb += w * pb * pb;
                        cov += w * pa * pb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                ssim_acc += (2 * ma * mb + C1) * (2 * cov + C2) /
                            ((ma * ma + mb * mb + C1) * (va + vb + C2));
                ++ssim_cnt;
            }
    const double ssim_ref = ssim_acc / ssim_cnt;

    Tape tape;
    Var av = tape.constant(a), bv = tape.constant(b);
    CHECK(tape.value(l1_loss(tape, av, bv)).data[0] == doctest::Approx(l1).epsilon(1e-12));
    CHECK(tape.value(ssim_loss(tape, av, bv)).data[0] ==
          doctest::Approx(ssim_ref).epsilon(1e-10));
    const double lam = 0.2;
    CHECK(tape.value(reconstruction_loss(tape, av, bv, lam)).data[0] ==
          doctest::Approx((1 - lam) * l1 + lam * (1 - ssim_ref) / 2).epsilon(1e-10));
}

TEST_CASE("uncertainty regularizer value and sign flip") {
    Scene scene;
    scene.sh_degree = 0;
    scene.embed_dim = 0;
    for (double sigma : {0.5, 1.5}) {
        GaussianPrimitive g = scene.make_primitive();
        g.opacity_sigma_raw = std::log(std::exp(sigma) - 1.0);  // softplus inverse
        scene.gaussians.push_back(std::move(g));
    }
    CHECK(uncertainty_reg_value(scene, false) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(uncertainty_reg_value(scene, true) == doctest::Approx(2.0).epsilon(1e-12));

    std::vector<double> grad(2, 0.0);
    uncertainty_reg_grad(scene, 0.1, false, grad);
    // d(-sigma)/d(raw) = -S(raw)
    CHECK(grad[0] == doctest::Approx(-0.1 * sigmoid(scene.gaussians[0].opacity_sigma_raw))
                         .epsilon(1e-12));
}

TEST_CASE("training is bit-identical across reruns") {
    const SynthDataset ds = tiny_dataset();
    const TrainConfig cfg = tiny_config();

    TrainState a, b;
    a.init(ds, cfg);
    b.init(ds, cfg);
    REQUIRE(scenes_identical(a.scene, b.scene));
    LossBreakdown la{}, lb{};
    for (int i = 0; i < 10; ++i) {
        const int view = i % int(ds.train_cams.size());
        const int style = i % (int(ds.styles.size()));
        la = train_step(a, ds, view, style);
        lb = train_step(b, ds, view, style);
    }
    CHECK(scenes_identical(a.scene, b.scene));
    CHECK(la.rec == lb.rec);
    CHECK(la.contra == lb.contra);
    CHECK(la.total == lb.total);
}

TEST_CASE("loss breakdown identities hold") {
    const SynthDataset ds = tiny_dataset();
    TrainState st;
    st.init(ds, tiny_config());
    for (int i = 0; i < 5; ++i) {
        const LossBreakdown bd = train_step(st, ds, i % 4, i % 3);
        CHECK(std::abs(bd.tape_total - (bd.rec + bd.contra)) <= 1e-12);
        CHECK(std::abs(bd.total - (bd.rec + bd.contra + st.cfg.lambda_ucn * bd.ucn)) <= 1e-12);
        CHECK(bd.rec >= 0.0);
        CHECK(bd.psnr > 0.0);
        CHECK(bd.ucn <= 0.0);  // -sum softplus
    }
}

TEST_CASE("M1 leaves opacity variance, embeddings and the field untouched") {
    const SynthDataset ds = tiny_dataset();
    TrainState st;
    st.init(ds, tiny_config(Variant::M1));
    const std::vector<double> sigma_before = [&] {
        std::vector<double> v;
        for (const auto& g : st.scene.gaussians) v.push_back(g.opacity_sigma_raw);
        return v;
    }();
    std::vector<double> field_before;
    for (const auto& [name, t] : st.nets.params())
        field_before.insert(field_before.end(), t->data.begin(), t->data.end());

    for (int i = 0; i < 5; ++i) {
        const LossBreakdown bd = train_step(st, ds, i % 4, i % 3);
        CHECK(bd.contra == 0.0);
        CHECK(bd.ucn == 0.0);
    }
    for (size_t i = 0; i < st.scene.size(); ++i)
        CHECK(st.scene.gaussians[i].opacity_sigma_raw == sigma_before[i]);
    std::vector<double> field_after;
    for (const auto& [name, t] : st.nets.params())
        field_after.insert(field_after.end(), t->data.begin(), t->data.end());
    CHECK(field_after == field_before);
    CHECK_FALSE(st.bank.any_entries());
}

TEST_CASE("prune removes transparent gaussians, clone copies dense ones") {
    const SynthDataset ds = tiny_dataset();
    TrainConfig cfg = tiny_config();
    cfg.densify_from = 0;
    TrainState st;
    st.init(ds, cfg);
    const size_t n0 = st.scene.size();

    // make gaussian 0 effectively transparent and gaussian 1 high-gradient/small
    st.scene.gaussians[0].opacity_mu = logit(0.001);
    st.scene.gaussians[1].log_scale[0] = st.scene.gaussians[1].log_scale[1] =
        st.scene.gaussians[1].log_scale[2] = std::log(1e-3);
    st.grad_accum.assign(n0, 0.0);
    st.grad_count.assign(n0, 0);
    st.grad_accum[1] = 1.0;  // huge mean screen gradient
    st.grad_count[1] = 1;
    const GaussianPrimitive dense = st.scene.gaussians[1];

    densify_and_prune(st);
    CHECK(st.scene.size() == n0);  // one pruned, one cloned
    // the clone sits right after its parent (which is index 0 after the prune)
    // with identical parameters
    const auto& clone = st.scene.gaussians[1];
    CHECK(st.scene.gaussians[0].pos[0] == dense.pos[0]);
    CHECK(clone.pos[0] == dense.pos[0]);
    CHECK(clone.sh == dense.sh);
    CHECK(clone.opacity_mu == dense.opacity_mu);
    // stats were reset and resized
    CHECK(st.grad_accum.size() == st.scene.size());
    for (double v : st.grad_accum) CHECK(v == 0.0);
    // moments track the new count
    CHECK(st.opt_pos.m.size() == st.scene.size() * 3);
}

TEST_CASE("split replaces a large gaussian by two smaller ones") {
    const SynthDataset ds = tiny_dataset();
    TrainConfig cfg = tiny_config();
    cfg.densify_from = 0;
    TrainState st;
    st.init(ds, cfg);
    const size_t n0 = st.scene.size();
    st.scene.gaussians[2].log_scale[0] = std::log(0.5);  // above the 0.01*extent split size
    st.grad_accum.assign(n0, 0.0);
    st.grad_count.assign(n0, 0);
    st.grad_accum[2] = 1.0;
    st.grad_count[2] = 1;
    const double parent_scale = st.scene.gaussians[2].log_scale[0];

    densify_and_prune(st);
    CHECK(st.scene.size() == n0 + 1);
    // both children carry the shrunken scale
    CHECK(st.scene.gaussians[2].log_scale[0] ==
          doctest::Approx(parent_scale - std::log(1.6)).epsilon(1e-12));
    CHECK(st.scene.gaussians[3].log_scale[0] ==
          doctest::Approx(parent_scale - std::log(1.6)).epsilon(1e-12));
}

TEST_CASE("reset_opacity caps mu and clears its moments") {
    const SynthDataset ds = tiny_dataset();
    TrainState st;
    st.init(ds, tiny_config(Variant::M3));
    for (int i = 0; i < 3; ++i) train_step(st, ds, i % 4, 0);
    st.scene.gaussians[0].opacity_mu = logit(0.9);
    st.scene.gaussians[1].opacity_mu = logit(0.001);  // already below the cap
    reset_opacity(st);
    const double cap = logit(0.01);
    CHECK(st.scene.gaussians[0].opacity_mu == doctest::Approx(cap).epsilon(1e-12));
    CHECK(st.scene.gaussians[1].opacity_mu == doctest::Approx(logit(0.001)).epsilon(1e-12));
    for (double v : st.opt_mu.m) CHECK(v == 0.0);
    for (double v : st.opt_mu.v) CHECK(v == 0.0);
}

TEST_CASE("checkpoint resume continues bit-identically") {
    const SynthDataset ds = tiny_dataset();
    TrainState a;
    a.init(ds, tiny_config());
    for (int i = 0; i < 6; ++i) train_step(a, ds, i % 4, i % 3);

    const std::string dir = temp_dir("resume_ck");
    a.save(dir);
    TrainState b = TrainState::load(dir);
    CHECK(b.iteration == a.iteration);
    REQUIRE(scenes_identical(a.scene, b.scene));

    for (int i = 6; i < 12; ++i) {
        const LossBreakdown la = train_step(a, ds, i % 4, i % 3);
        const LossBreakdown lb = train_step(b, ds, i % 4, i % 3);
        CHECK(la.total == lb.total);
    }
    CHECK(scenes_identical(a.scene, b.scene));
}

TEST_CASE("run_training writes metrics and checkpoints; zero iterations is valid") {
    const SynthDataset ds = tiny_dataset();
    TrainConfig cfg = tiny_config();
    cfg.iterations = 200;

    const std::string dir = temp_dir("run_ck");
    run_training(cfg, ds, dir);
    CHECK(fs::exists(fs::path(dir) / "scene.scene"));
    CHECK(fs::exists(fs::path(dir) / "optim.bin"));
    CHECK(fs::exists(fs::path(dir) / "field.bin"));
    CHECK(fs::exists(fs::path(dir) / "queues.bin"));
    CHECK(fs::exists(fs::path(dir) / "config.txt"));

    std::ifstream mf(fs::path(dir) / "metrics.csv");
    std::string line;
    std::getline(mf, line);
    CHECK(line == "iteration,rec,contra,ucn,psnr");
    int rows = 0;
    while (std::getline(mf, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);  // iterations 100 and 200

    cfg.iterations = 0;
    const std::string dir0 = temp_dir("run_ck0");
    run_training(cfg, ds, dir0);
    CHECK(fs::exists(fs::path(dir0) / "scene.scene"));
    std::ifstream mf0(fs::path(dir0) / "metrics.csv");
    std::getline(mf0, line);
    CHECK(line == "iteration,rec,contra,ucn,psnr");
    CHECK_FALSE(std::getline(mf0, line));
}

TEST_CASE("psnr metric conventions") {
    Image a(16, 16), b(16, 16);
    for (int i = 0; i < 16 * 16 * 3; ++i) a.data[size_t(i)] = (i % 7) / 7.0;
    b.data = a.data;
    CHECK(psnr(a, b) == 99.0);  // sentinel for identical images
    CHECK(ssim(a, a) == 1.0);

    Image black(16, 16), white(16, 16);
    for (double& v : white.data) v = 1.0;
    CHECK(psnr(black, white) == doctest::Approx(0.0).epsilon(1e-12));  // MSE 1
    b.data[0] += 0.25;
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-15));
}
