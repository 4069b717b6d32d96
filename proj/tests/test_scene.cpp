#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "splat/camera.hpp"
#include "splat/common.hpp"
#include "splat/image.hpp"
#include "splat/rng.hpp"
#include "splat/scene.hpp"

using namespace splat;
namespace fs = std::filesystem;

namespace {
std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

// independent quaternion-to-matrix oracle (angle-axis route)
Mat3 quat_oracle(const double q[4]) {
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const double w = q[0] / n;
    const double axis_n = std::sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3]) / n;
    Mat3 r = Mat3::identity();
    if (axis_n < 1e-15) return r;
    const double angle = 2.0 * std::atan2(axis_n, w);
    const Vec3 u = Vec3{q[1], q[2], q[3]}.normalized();
    const double c = std::cos(angle), s = std::sin(angle);
    // Rodrigues
    const double uu[3] = {u.x, u.y, u.z};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r(i, j) = c * (i == j ? 1.0 : 0.0) + (1 - c) * uu[i] * uu[j];
    r(0, 1) += -s * u.z; r(0, 2) += s * u.y;
    r(1, 0) += s * u.z;  r(1, 2) += -s * u.x;
    r(2, 0) += -s * u.y; r(2, 1) += s * u.x;
    return r;
}

void random_quat(Rng& rng, double q[4]) {
    double n2 = 0;
    for (int i = 0; i < 4; ++i) {
        q[i] = rng.gauss();
        n2 += q[i] * q[i];
    }
    for (int i = 0; i < 4; ++i) q[i] /= std::sqrt(n2);
}
}  // namespace

TEST_CASE("build_covariance identity and axis scaling") {
    const double qi[4] = {1, 0, 0, 0};
    const double s0[3] = {0, 0, 0};
    Mat3 sigma = build_covariance(qi, s0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(sigma(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));

    const double s1[3] = {std::log(2.0), 0, 0};
    sigma = build_covariance(qi, s1);
    CHECK(sigma(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(sigma(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sigma(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build_covariance matches the independent matrix oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        double q[4], s[3];
        random_quat(rng, q);
        for (double& v : s) v = rng.uniform(-1.5, 1.5);
        const Mat3 sigma = build_covariance(q, s);
        const Mat3 r = quat_oracle(q);
        Mat3 d;
        for (int i = 0; i < 3; ++i) d(i, i) = std::exp(2.0 * s[i]);
        const Mat3 expect = r * d * r.transposed();
        for (int i = 0; i < 9; ++i) CHECK(sigma.m[i] == doctest::Approx(expect.m[i]).epsilon(1e-9));
        // exact symmetry
        CHECK(sigma(0, 1) == sigma(1, 0));
        CHECK(sigma(0, 2) == sigma(2, 0));
        CHECK(sigma(1, 2) == sigma(2, 1));
    }
}

TEST_CASE("build_covariance output admits a Cholesky factorization") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        double q[4], s[3];
        random_quat(rng, q);
        for (double& v : s) v = rng.uniform(-2, 2);
        Mat3 a = build_covariance(q, s);
        // in-place Cholesky; fails iff a is not PSD (allowing tiny slack)
        double l[3][3] = {};
        bool ok = true;
        for (int i = 0; i < 3 && ok; ++i) {
            for (int j = 0; j <= i; ++j) {
                double sum = a(i, j);
                for (int k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
                if (i == j) {
                    ok = sum > -1e-12;
                    l[i][i] = std::sqrt(std::max(sum, 0.0));
                } else {
                    l[i][j] = l[j][j] > 0 ? sum / l[j][j] : 0.0;
                }
            }
        }
        CHECK(ok);
    }
}

TEST_CASE("covariance_backward matches finite differences") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        double q[4], s[3];
        random_quat(rng, q);
        for (int i = 0; i < 4; ++i) q[i] *= 1.3;  // unnormalized on purpose
        for (double& v : s) v = rng.uniform(-1, 1);
        Mat3 w;
        for (int i = 0; i < 9; ++i) w.m[i] = rng.uniform(-1, 1);

        auto loss = [&] {
            const Mat3 sig = build_covariance(q, s);
            double acc = 0;
            for (int i = 0; i < 9; ++i) acc += w.m[i] * sig.m[i];
            return acc;
        };
        double dq[4] = {}, ds[3] = {};
        covariance_backward(q, s, w, dq, ds);
        const double h = 1e-6;
        for (int i = 0; i < 4; ++i) {
            const double saved = q[i];
            q[i] = saved + h;
            const double hi = loss();
            q[i] = saved - h;
            const double lo = loss();
            q[i] = saved;
            CHECK(dq[i] == doctest::Approx((hi - lo) / (2 * h)).epsilon(1e-4));
        }
        for (int i = 0; i < 3; ++i) {
            const double saved = s[i];
            s[i] = saved + h;
            const double hi = loss();
            s[i] = saved - h;
            const double lo = loss();
            s[i] = saved;
            CHECK(ds[i] == doctest::Approx((hi - lo) / (2 * h)).epsilon(1e-4));
        }
    }
}

TEST_CASE("scene file round-trips") {
    const std::string path = temp_path("roundtrip.scene");

    Scene empty;
    empty.sh_degree = 2;
    empty.embed_dim = 4;
    write_scene(path, empty);
    Scene back = read_scene(path);
    CHECK(back.size() == 0);
    CHECK(back.sh_degree == 2);
    CHECK(back.embed_dim == 4);

    Rng rng(31);
    Scene scene;
    scene.sh_degree = 3;
    scene.embed_dim = 8;
    for (int i = 0; i < 1000; ++i) {
        GaussianPrimitive g = scene.make_primitive();
        for (double& v : g.pos) v = rng.uniform(-5, 5);
        random_quat(rng, g.rot);
        for (double& v : g.log_scale) v = rng.uniform(-3, 1);
        g.opacity_mu = rng.uniform(-4, 4);
        g.opacity_sigma_raw = rng.uniform(-8, 2);
        for (double& v : g.sh) v = rng.uniform(-2, 2);
        for (double& v : g.embed) v = rng.gauss();
        scene.gaussians.push_back(std::move(g));
    }
    write_scene(path, scene);
    back = read_scene(path);
    REQUIRE(back.size() == scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        const auto& a = scene.gaussians[i];
        const auto& b = back.gaussians[i];
        for (int c = 0; c < 3; ++c) CHECK(a.pos[c] == b.pos[c]);
        for (int c = 0; c < 4; ++c) CHECK(a.rot[c] == b.rot[c]);
        for (int c = 0; c < 3; ++c) CHECK(a.log_scale[c] == b.log_scale[c]);
        CHECK(a.opacity_mu == b.opacity_mu);
        CHECK(a.opacity_sigma_raw == b.opacity_sigma_raw);
        CHECK(a.sh == b.sh);
        CHECK(a.embed == b.embed);
    }
}

TEST_CASE("scene file errors carry byte diagnostics") {
    const std::string path = temp_path("truncated.scene");
    Scene scene;
    scene.gaussians.push_back(scene.make_primitive());
    write_scene(path, scene);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 16);
    try {
        read_scene(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(std::to_string(full)) != std::string::npos);        // expected length
        CHECK(msg.find(std::to_string(full - 16)) != std::string::npos);  // actual length
    }

    std::ofstream bad(path, std::ios::binary);
    bad << "NOTSCENE garbage";
    bad.close();
    CHECK_THROWS_AS(read_scene(path), FormatError);
}

TEST_CASE("camera set round-trips and rejects reflections") {
    const std::string path = temp_path("cams.txt");
    std::vector<Camera> cams;
    cams.push_back(Camera{});  // identity
    cams.back().width = 64;
    cams.back().height = 48;
    Rng rng(55);
    for (int i = 0; i < 100; ++i) {
        const Vec3 eye{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        Vec3 tgt{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if ((eye - tgt).norm() < 0.5) tgt.x += 1.0;
        cams.push_back(Camera::look_at(eye, tgt, Vec3{0, 1, 0}, rng.uniform(20, 80), 64, 64));
    }
    write_camera_set(path, cams);
    const auto back = read_camera_set(path);
    REQUIRE(back.size() == cams.size());
    for (size_t i = 0; i < cams.size(); ++i) {
        for (int k = 0; k < 9; ++k) CHECK(std::abs(back[i].K[k] - cams[i].K[k]) < 1e-12);
        for (int k = 0; k < 16; ++k) CHECK(std::abs(back[i].W[k] - cams[i].W[k]) < 1e-12);
        CHECK(back[i].width == cams[i].width);
        CHECK(back[i].height == cams[i].height);
    }

    Camera mirrored = cams[1];
    for (int c = 0; c < 4; ++c) mirrored.W[c] = -mirrored.W[c];  // negate first row: det -1
    CHECK_THROWS_AS(mirrored.validate(), ValidationError);
    CHECK_THROWS_AS(write_camera_set(path, {mirrored}), ValidationError);
    {
        // a hand-written file with the same reflection must be rejected on read
        std::ofstream out(path);
        out << "SPLATCAMS 1 1\n"
            << "1 0 0 0 1 0 0 0 1 "
            << "-1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1 8 8\n";
    }
    CHECK_THROWS_AS(read_camera_set(path), ValidationError);
}

TEST_CASE("camera validation and geometry") {
    Camera cam = Camera::look_at(Vec3{0, 0, -5}, Vec3{0, 0, 0}, Vec3{0, 1, 0}, 50, 64, 64);
    CHECK_NOTHROW(cam.validate());
    const Vec3 c = cam.center();
    CHECK(c.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.z == doctest::Approx(-5.0).epsilon(1e-9));
    const Vec3 v = cam.to_view(Vec3{0, 0, 0});
    CHECK(v.z == doctest::Approx(5.0).epsilon(1e-9));

    Camera bad = cam;
    bad.K[0] = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cam;
    bad.K[1] = 0.1;  // skew
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("ppm round-trips within quantization") {
    const std::string path = temp_path("img.ppm");

    Image white(1, 1);
    white.data = {1, 1, 1};
    write_ppm(path, white);
    Image back = read_ppm(path);
    REQUIRE(back.width == 1);
    for (double v : back.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    Image grad2(2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 3; ++c) grad2.at(y, x, c) = (y * 2 + x + c * 0.2) / 4.0;
    write_ppm(path, grad2);
    back = read_ppm(path);
    for (size_t i = 0; i < grad2.data.size(); ++i)
        CHECK(std::abs(back.data[i] - grad2.data[i]) <= 1.0 / 255.0);
}

TEST_CASE("ppm rejects the ASCII variant and malformed headers") {
    const std::string path = temp_path("ascii.ppm");
    {
        std::ofstream out(path);
        out << "P3\n1 1\n255\n255 0 0\n";
    }
    CHECK_THROWS_AS(read_ppm(path), FormatError);
    {
        std::ofstream out(path);
        out << "P6\n-3 1\n255\n";
    }
    CHECK_THROWS_AS(read_ppm(path), FormatError);
}

TEST_CASE("ppm reads 16-bit big-endian data") {
    const std::string path = temp_path("deep.ppm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n1 1\n65535\n";
        const unsigned char px[6] = {0xFF, 0xFF, 0x80, 0x00, 0x00, 0x00};
        out.write(reinterpret_cast<const char*>(px), 6);
    }
    Image img = read_ppm(path);
    CHECK(img.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(img.at(0, 0, 1) == doctest::Approx(0x8000 / 65535.0).epsilon(1e-9));
    CHECK(img.at(0, 0, 2) == 0.0);
}
