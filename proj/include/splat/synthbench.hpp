#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splat/camera.hpp"
#include "splat/image.hpp"
#include "splat/scene.hpp"

namespace splat {

// Per-channel affine recolor plus a smooth per-view multiplicative jitter
// field; stands in for one restoration model's output style.
struct StyleTransform {
    int style_id = 0;
    double gain[3] = {1, 1, 1};
    double bias[3] = {0, 0, 0};
    double jitter_amp = 0.0;

    bool is_identity() const {
        return gain[0] == 1 && gain[1] == 1 && gain[2] == 1 && bias[0] == 0 && bias[1] == 0 &&
               bias[2] == 0 && jitter_amp == 0;
    }
};

struct SynthSpec {
    int gaussian_count = 200;
    int train_views = 24;
    int test_views = 4;
    int styles = 3;  // non-identity styles; image groups = styles + 1
    int width = 64;
    int height = 64;
    double extent = 1.0;
    double jitter_amp = 0.0;  // cross-view inconsistency of non-identity styles
    int clean_images = 8;
    std::uint64_t seed = 0;
};

struct SynthDataset {
    SynthSpec spec;
    Scene gt;
    std::vector<Camera> train_cams, test_cams;
    std::vector<StyleTransform> styles;  // index 0 = identity
    // images[view][style]; views are train first, then test
    std::vector<std::vector<Image>> train_images, test_images;
    std::vector<Image> clean_images;
};

// Random scene inside the extent: an enclosing shell plus interior clutter,
// resampled (seed+1, seed+2, ...) until >= 50% of pixels see alpha > 0.1 from
// a reference camera ring.
Scene make_scene(int count, double extent, std::uint64_t seed);

// Orbit cameras around the origin at radius 2.2 * extent, looking inward.
std::vector<Camera> make_orbit(int count, double extent, int width, int height,
                               double phase = 0.0);

// Renders every (view, style) image plus the clean-scene pool. Pure function
// of the spec.
SynthDataset make_dataset(const SynthSpec& spec);

// Directory layout: cameras.txt (train then test), gt.scene, img_{j}_{m}.ppm
// with j a global view index, clean/img_{k}.ppm, manifest.txt.
void write_dataset(const std::string& dir, const SynthDataset& ds);
SynthDataset read_dataset(const std::string& dir);

// Deterministic per-image seed derivation.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t j, std::uint64_t m);

// Applies a style to a ground-truth render.
Image apply_style(const Image& render, const StyleTransform& style, std::uint64_t jitter_seed);

}  // namespace splat
