#include "splat/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "splat/common.hpp"
#include "splat/rasterizer.hpp"
#include "splat/rng.hpp"
#include "splat/scalar.hpp"

namespace fs = std::filesystem;

namespace splat {

namespace {
constexpr double kShC0 = 0.28209479177387814;
constexpr double kOrbitRadiusFactor = 2.2;
constexpr double kFocalFactor = 1.4;  // per image width; keeps the view inside the shell

void random_quat(Rng& rng, double q[4]) {
    double n2 = 0.0;
    do {
        for (int k = 0; k < 4; ++k) q[k] = rng.gauss();
        n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    for (int k = 0; k < 4; ++k) q[k] *= inv;
}

Scene sample_scene(int count, double extent, Rng& rng) {
    Scene scene;
    scene.sh_degree = 3;
    scene.embed_dim = 8;
    const int shell = std::max(1, count * 13 / 20);
    const double shell_sigma = 2.5 * extent / std::sqrt(double(shell));
    for (int i = 0; i < count; ++i) {
        GaussianPrimitive g = scene.make_primitive();
        if (i < shell) {
            Vec3 d{rng.gauss(), rng.gauss(), rng.gauss()};
            while (d.norm() < 1e-9) d = {rng.gauss(), rng.gauss(), rng.gauss()};
            d = d.normalized();
            g.pos[0] = d.x * extent;
            g.pos[1] = d.y * extent;
            g.pos[2] = d.z * extent;
            const double s = shell_sigma * rng.uniform(0.8, 1.3);
            for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(s);
        } else {
            // interior clutter, rejection-sampled into a ball
            Vec3 p;
            do {
                p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            } while (p.norm() > 1.0);
            g.pos[0] = p.x * 0.55 * extent;
            g.pos[1] = p.y * 0.55 * extent;
            g.pos[2] = p.z * 0.55 * extent;
            for (int k = 0; k < 3; ++k)
                g.log_scale[k] = std::log(extent * rng.uniform(0.05, 0.15));
        }
        random_quat(rng, g.rot);
        g.opacity_mu = logit(rng.uniform(0.5, 0.95));
        g.opacity_sigma_raw = -10.0;
        const int k1 = sh_coeff_count(scene.sh_degree);
        for (int c = 0; c < 3; ++c) {
            g.sh[size_t(c * k1)] = rng.uniform(0.15, 0.85) / kShC0;
            for (int b = 1; b < 4 && b < k1; ++b)
                g.sh[size_t(c * k1 + b)] = rng.uniform(-0.04, 0.04) / kShC0;
        }
        scene.gaussians.push_back(std::move(g));
    }
    return scene;
}

double coverage_fraction(const Scene& scene, double extent) {
    const auto cams = make_orbit(8, extent, 32, 32, 0.3);
    std::vector<double> colors;  // SH coeff source
    const int k3 = scene.coeff_count();
    colors.reserve(scene.size() * size_t(k3));
    for (const auto& g : scene.gaussians)
        colors.insert(colors.end(), g.sh.begin(), g.sh.end());
    const double bg[3] = {0, 0, 0};
    long hit = 0, total = 0;
    for (const Camera& cam : cams) {
        RenderOutput out = render(scene, cam, ColorSource::sh(colors.data(), scene.sh_degree),
                                  RenderMode::deterministic_mean(), bg);
        for (double a : out.alpha) {
            hit += a > 0.1;
            ++total;
        }
    }
    return double(hit) / double(total);
}
}  // namespace

Scene make_scene(int count, double extent, std::uint64_t seed) {
    if (count < 1) throw ValidationError("make_scene: count must be >= 1");
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed + attempt);
        Scene scene = sample_scene(count, extent, rng);
        if (coverage_fraction(scene, extent) >= 0.5) return scene;
        if (attempt > 64)
            throw NumericError("make_scene: coverage requirement not met after 64 resamples");
    }
}

std::vector<Camera> make_orbit(int count, double extent, int width, int height, double phase) {
    std::vector<Camera> cams;
    const double r = kOrbitRadiusFactor * extent;
    const double focal = kFocalFactor * width;
    for (int k = 0; k < count; ++k) {
        const double theta = 2.0 * M_PI * k / count + phase;
        const double elev = 0.35 * std::sin(2.399963229728653 * k + phase);
        const Vec3 eye{r * std::cos(theta) * std::cos(elev), r * std::sin(elev),
                       r * std::sin(theta) * std::cos(elev)};
        cams.push_back(Camera::look_at(eye, Vec3{0, 0, 0}, Vec3{0, 1, 0}, focal, width, height));
    }
    return cams;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t j, std::uint64_t m) {
    std::uint64_t z = seed;
    for (std::uint64_t v : {j, m}) z ^= v + 0x9E3779B97F4A7C15ull + (z << 6) + (z >> 2);
    Rng r(z);
    return r.next_u64();
}

Image apply_style(const Image& render, const StyleTransform& style, std::uint64_t jitter_seed) {
    Image out(render.width, render.height);
    // smooth multiplicative jitter field: a few low-frequency sinusoids
    struct Wave {
        double fx, fy, phase, amp;
    };
    Wave waves[3];
    if (style.jitter_amp > 0) {
        Rng rng(jitter_seed);
        double amp_total = 0;
        for (Wave& w : waves) {
            w.fx = rng.uniform(0.5, 1.5);
            w.fy = rng.uniform(0.5, 1.5);
            w.phase = rng.uniform(0.0, 2.0 * M_PI);
            w.amp = rng.uniform(0.3, 1.0);
            amp_total += w.amp;
        }
        for (Wave& w : waves) w.amp /= amp_total;
    }
    for (int y = 0; y < render.height; ++y)
        for (int x = 0; x < render.width; ++x) {
            double field = 1.0;
            if (style.jitter_amp > 0) {
                const double u = double(x) / render.width, v = double(y) / render.height;
                double s = 0;
                for (const Wave& w : waves)
                    s += w.amp * std::sin(2.0 * M_PI * (w.fx * u + w.fy * v) + w.phase);
                field = 1.0 + style.jitter_amp * s;
            }
            for (int c = 0; c < 3; ++c) {
                const double val = style.gain[c] * render.at(y, x, c) * field + style.bias[c];
                out.at(y, x, c) = std::clamp(val, 0.0, 1.0);
            }
        }
    return out;
}

SynthDataset make_dataset(const SynthSpec& spec) {
    if (spec.styles < 0) throw ValidationError("make_dataset: styles must be >= 0");
    SynthDataset ds;
    ds.spec = spec;
    ds.gt = make_scene(spec.gaussian_count, spec.extent, spec.seed);
    ds.train_cams = make_orbit(spec.train_views, spec.extent, spec.width, spec.height, 0.0);
    // test cameras sit between training azimuths
    ds.test_cams = make_orbit(spec.test_views, spec.extent, spec.width, spec.height,
                              M_PI / std::max(1, spec.train_views));

    // style 0 identity, the rest random affine recolorings
    Rng style_rng(mix_seed(spec.seed, 0xABCDull, 0));
    ds.styles.push_back(StyleTransform{});
    for (int m = 1; m <= spec.styles; ++m) {
        StyleTransform st;
        st.style_id = m;
        for (int c = 0; c < 3; ++c) {
            st.gain[c] = style_rng.uniform(0.75, 1.15);
            st.bias[c] = style_rng.uniform(-0.06, 0.12);
        }
        st.jitter_amp = spec.jitter_amp;
        ds.styles.push_back(st);
    }

    std::vector<double> colors;
    for (const auto& g : ds.gt.gaussians) colors.insert(colors.end(), g.sh.begin(), g.sh.end());
    const ColorSource src = ColorSource::sh(colors.data(), ds.gt.sh_degree);
    const double bg[3] = {0, 0, 0};
    auto render_group = [&](const std::vector<Camera>& cams, int j_base) {
        std::vector<std::vector<Image>> group;
        for (size_t j = 0; j < cams.size(); ++j) {
            Image base = render(ds.gt, cams[j], src, RenderMode::deterministic_mean(), bg).to_image();
            std::vector<Image> per_style;
            for (int m = 0; m <= spec.styles; ++m)
                per_style.push_back(apply_style(base, ds.styles[size_t(m)],
                                                mix_seed(spec.seed, std::uint64_t(j_base) + j,
                                                         std::uint64_t(m))));
            group.push_back(std::move(per_style));
        }
        return group;
    };
    ds.train_images = render_group(ds.train_cams, 0);
    ds.test_images = render_group(ds.test_cams, spec.train_views);

    // unrelated clean scene for the negative-latent pool
    Scene clean = make_scene(spec.gaussian_count, spec.extent, mix_seed(spec.seed, 0xC1EAull, 7));
    std::vector<double> clean_colors;
    for (const auto& g : clean.gaussians)
        clean_colors.insert(clean_colors.end(), g.sh.begin(), g.sh.end());
    const auto clean_cams = make_orbit(spec.clean_images, spec.extent, spec.width, spec.height, 0.7);
    for (const Camera& cam : clean_cams)
        ds.clean_images.push_back(render(clean, cam,
                                         ColorSource::sh(clean_colors.data(), clean.sh_degree),
                                         RenderMode::deterministic_mean(), bg)
                                      .to_image());
    return ds;
}

namespace {
std::string img_name(int j, int m) {
    return "img_" + std::to_string(j) + "_" + std::to_string(m) + ".ppm";
}
}  // namespace

void write_dataset(const std::string& dir, const SynthDataset& ds) {
    fs::create_directories(fs::path(dir) / "clean");
    write_scene((fs::path(dir) / "gt.scene").string(), ds.gt);
    std::vector<Camera> all_cams = ds.train_cams;
    all_cams.insert(all_cams.end(), ds.test_cams.begin(), ds.test_cams.end());
    write_camera_set((fs::path(dir) / "cameras.txt").string(), all_cams);

    std::ofstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw FormatError("cannot write manifest in " + dir);
    const SynthSpec& s = ds.spec;
    man << "synthbench 1\n";
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "seed %llu\ngaussians %d\ntrain_views %d\ntest_views %d\nstyles %d\n"
                  "width %d\nheight %d\nextent %.17g\njitter_amp %.17g\nclean_images %d\n",
                  (unsigned long long)s.seed, s.gaussian_count, s.train_views, s.test_views,
                  s.styles, s.width, s.height, s.extent, s.jitter_amp, s.clean_images);
    man << buf;
    for (const StyleTransform& st : ds.styles) {
        std::snprintf(buf, sizeof buf,
                      "style %d gain %.17g %.17g %.17g bias %.17g %.17g %.17g jitter %.17g\n",
                      st.style_id, st.gain[0], st.gain[1], st.gain[2], st.bias[0], st.bias[1],
                      st.bias[2], st.jitter_amp);
        man << buf;
    }

    auto write_group = [&](const std::vector<std::vector<Image>>& group, int j_base) {
        for (size_t j = 0; j < group.size(); ++j)
            for (size_t m = 0; m < group[j].size(); ++m)
                write_ppm((fs::path(dir) / img_name(j_base + int(j), int(m))).string(),
                          group[j][m]);
    };
    write_group(ds.train_images, 0);
    write_group(ds.test_images, ds.spec.train_views);
    for (size_t k = 0; k < ds.clean_images.size(); ++k)
        write_ppm((fs::path(dir) / "clean" / ("img_" + std::to_string(k) + ".ppm")).string(),
                  ds.clean_images[k]);
}

SynthDataset read_dataset(const std::string& dir) {
    std::ifstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw FormatError("cannot open manifest in " + dir);
    std::string tag;
    int version = 0;
    man >> tag >> version;
    if (tag != "synthbench" || version != 1) throw FormatError("manifest: bad header");
    SynthDataset ds;
    SynthSpec& s = ds.spec;
    unsigned long long seed = 0;
    std::string key;
    while (man >> key) {
        if (key == "seed") man >> seed;
        else if (key == "gaussians") man >> s.gaussian_count;
        else if (key == "train_views") man >> s.train_views;
        else if (key == "test_views") man >> s.test_views;
        else if (key == "styles") man >> s.styles;
        else if (key == "width") man >> s.width;
        else if (key == "height") man >> s.height;
        else if (key == "extent") man >> s.extent;
        else if (key == "jitter_amp") man >> s.jitter_amp;
        else if (key == "clean_images") man >> s.clean_images;
        else if (key == "style") {
            StyleTransform st;
            std::string w;
            man >> st.style_id >> w >> st.gain[0] >> st.gain[1] >> st.gain[2] >> w >> st.bias[0] >>
                st.bias[1] >> st.bias[2] >> w >> st.jitter_amp;
            ds.styles.push_back(st);
        } else {
            throw FormatError("manifest: unknown key '" + key + "'");
        }
    }
    s.seed = seed;
    if (int(ds.styles.size()) != s.styles + 1)
        throw FormatError("manifest: style record count mismatch");

    ds.gt = read_scene((fs::path(dir) / "gt.scene").string());
    auto cams = read_camera_set((fs::path(dir) / "cameras.txt").string());
    if (int(cams.size()) != s.train_views + s.test_views)
        throw ValidationError("dataset: camera count does not match manifest");
    ds.train_cams.assign(cams.begin(), cams.begin() + s.train_views);
    ds.test_cams.assign(cams.begin() + s.train_views, cams.end());

    auto read_group = [&](int views, int j_base) {
        std::vector<std::vector<Image>> group;
        for (int j = 0; j < views; ++j) {
            std::vector<Image> per_style;
            for (int m = 0; m <= s.styles; ++m)
                per_style.push_back(read_ppm((fs::path(dir) / img_name(j_base + j, m)).string()));
            group.push_back(std::move(per_style));
        }
        return group;
    };
    ds.train_images = read_group(s.train_views, 0);
    ds.test_images = read_group(s.test_views, s.train_views);
    for (int k = 0; k < s.clean_images; ++k)
        ds.clean_images.push_back(
            read_ppm((fs::path(dir) / "clean" / ("img_" + std::to_string(k) + ".ppm")).string()));
    return ds;
}

}  // namespace splat
