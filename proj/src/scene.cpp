#include "splat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "splat/common.hpp"
#include "splat/scalar.hpp"

namespace splat {

double GaussianPrimitive::opacity_sigma() const { return softplus(opacity_sigma_raw); }

GaussianPrimitive Scene::make_primitive() const {
    GaussianPrimitive g;
    g.sh.assign(size_t(coeff_count()), 0.0);
    g.embed.assign(size_t(embed_dim), 0.0);
    return g;
}

Mat3 quat_to_rotmat(const double q[4]) {
    double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3 r;
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return r;
}

namespace {
double clamped_scale(double s) { return std::clamp(std::exp(s), kScaleMin, kScaleMax); }
}  // namespace

Mat3 build_covariance(const double q[4], const double log_scale[3]) {
    Mat3 r = quat_to_rotmat(q);
    Mat3 m = r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) *= clamped_scale(log_scale[j]);
    Mat3 sigma = m * m.transposed();
    // enforce exact symmetry against rounding
    double od;
    od = 0.5 * (sigma(0, 1) + sigma(1, 0)); sigma(0, 1) = sigma(1, 0) = od;
    od = 0.5 * (sigma(0, 2) + sigma(2, 0)); sigma(0, 2) = sigma(2, 0) = od;
    od = 0.5 * (sigma(1, 2) + sigma(2, 1)); sigma(1, 2) = sigma(2, 1) = od;
    return sigma;
}

void covariance_backward(const double q[4], const double log_scale[3], const Mat3& dSigma,
                         double dq[4], double ds[3]) {
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3 r = quat_to_rotmat(q);
    double sc[3];
    for (int j = 0; j < 3; ++j) sc[j] = clamped_scale(log_scale[j]);
    Mat3 m = r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) *= sc[j];

    // Sigma = M M^T  =>  dM = (dSigma + dSigma^T) M
    Mat3 sym;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) sym(i, j) = dSigma(i, j) + dSigma(j, i);
    Mat3 dM = sym * m;

    // dR = dM * S; dS_kk = (R^T dM)_kk
    Mat3 dR;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) dR(i, j) = dM(i, j) * sc[j];
    for (int k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (int i = 0; i < 3; ++i) acc += r(i, k) * dM(i, k);
        const double e = std::exp(log_scale[k]);
        ds[k] += (e > kScaleMin && e < kScaleMax) ? acc * e : 0.0;
    }

    // contract dR with dR/dq_hat
    const double dRdq[4][9] = {
        // d/dw
        {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0},
        // d/dx
        {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x},
        // d/dy
        {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y},
        // d/dz
        {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0}};
    double dqhat[4] = {0, 0, 0, 0};
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 9; ++i) dqhat[k] += dR.m[i] * dRdq[k][i];

    // through the normalization q_hat = q/|q|
    const double qh[4] = {w, x, y, z};
    double proj = 0.0;
    for (int k = 0; k < 4; ++k) proj += dqhat[k] * qh[k];
    for (int k = 0; k < 4; ++k) dq[k] += (dqhat[k] - proj * qh[k]) / n;
}

namespace {
constexpr char kSceneMagic[8] = {'S', 'P', 'L', 'S', 'C', 'E', 'N', 'E'};
constexpr std::uint32_t kSceneVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
}  // namespace

void write_scene(const std::string& path, const Scene& scene) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write scene: " + path);
    out.write(kSceneMagic, 8);
    put_u32(out, kSceneVersion);
    put_u32(out, std::uint32_t(scene.gaussians.size()));
    put_u32(out, std::uint32_t(scene.sh_degree));
    put_u32(out, std::uint32_t(scene.embed_dim));
    const int k3 = scene.coeff_count();
    for (const GaussianPrimitive& g : scene.gaussians) {
        if (int(g.sh.size()) != k3 || int(g.embed.size()) != scene.embed_dim)
            throw ShapeError("write_scene: primitive field sizes inconsistent with header");
        auto put = [&](const double* p, size_t n) {
            out.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
        };
        put(g.pos, 3);
        put(g.rot, 4);
        put(g.log_scale, 3);
        put(&g.opacity_mu, 1);
        put(&g.opacity_sigma_raw, 1);
        put(g.sh.data(), g.sh.size());
        put(g.embed.data(), g.embed.size());
    }
}

Scene read_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open scene: " + path);
    const std::int64_t file_len = in.tellg();
    in.seekg(0);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kSceneMagic, 8) != 0)
        throw FormatError("scene: bad magic at byte offset 0");
    const std::uint32_t version = get_u32(in);
    if (version != kSceneVersion)
        throw FormatError("scene: unsupported version " + std::to_string(version) +
                          " at byte offset 8");
    const std::uint32_t n = get_u32(in);
    const std::uint32_t degree = get_u32(in);
    const std::uint32_t embed = get_u32(in);
    if (degree > 3) throw FormatError("scene: SH degree out of range at byte offset 16");
    Scene scene;
    scene.sh_degree = int(degree);
    scene.embed_dim = int(embed);
    const int k3 = scene.coeff_count();
    const std::int64_t record = std::int64_t(3 + 4 + 3 + 1 + 1 + k3 + int(embed)) * 8;
    const std::int64_t expect = 24 + record * n;
    if (file_len != expect)
        throw FormatError("scene: expected " + std::to_string(expect) + " bytes, file has " +
                          std::to_string(file_len));
    scene.gaussians.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        GaussianPrimitive g = scene.make_primitive();
        auto get = [&](double* p, size_t cnt) {
            in.read(reinterpret_cast<char*>(p), std::streamsize(cnt * 8));
        };
        get(g.pos, 3);
        get(g.rot, 4);
        get(g.log_scale, 3);
        get(&g.opacity_mu, 1);
        get(&g.opacity_sigma_raw, 1);
        get(g.sh.data(), g.sh.size());
        get(g.embed.data(), g.embed.size());
        if (!in) throw FormatError("scene: truncated record " + std::to_string(i));
        scene.gaussians.push_back(std::move(g));
    }
    return scene;
}

}  // namespace splat
