#include "splat/sh.hpp"

#include <cmath>
#include <cstring>

namespace splat {

namespace {
constexpr double C0 = 0.28209479177387814;
constexpr double C1 = 0.4886025119029199;
constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double C3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};
}  // namespace

void sh_basis(const double d[3], int degree, double* out) {
    if (degree < 0 || degree > 3) throw ContractError("sh_basis: degree must be in [0,3]");
    const double x = d[0], y = d[1], z = d[2];
    out[0] = C0;
    if (degree < 1) return;
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = C2[0] * x * y;
    out[5] = C2[1] * y * z;
    out[6] = C2[2] * (2.0 * zz - xx - yy);
    out[7] = C2[3] * x * z;
    out[8] = C2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = C3[0] * y * (3.0 * xx - yy);
    out[10] = C3[1] * x * y * z;
    out[11] = C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = C3[5] * z * (xx - yy);
    out[15] = C3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_dir_grad(const double d[3], int degree, double* out) {
    if (degree < 0 || degree > 3) throw ContractError("sh_basis_dir_grad: degree must be in [0,3]");
    const double x = d[0], y = d[1], z = d[2];
    const int k = sh_coeff_count(degree);
    std::memset(out, 0, sizeof(double) * size_t(k) * 3);
    auto row = [&](int i) { return out + 3 * i; };
    // band 0 is constant
    if (degree < 1) return;
    row(1)[1] = -C1;
    row(2)[2] = C1;
    row(3)[0] = -C1;
    if (degree < 2) return;
    row(4)[0] = C2[0] * y;
    row(4)[1] = C2[0] * x;
    row(5)[1] = C2[1] * z;
    row(5)[2] = C2[1] * y;
    row(6)[0] = C2[2] * (-2.0 * x);
    row(6)[1] = C2[2] * (-2.0 * y);
    row(6)[2] = C2[2] * (4.0 * z);
    row(7)[0] = C2[3] * z;
    row(7)[2] = C2[3] * x;
    row(8)[0] = C2[4] * (2.0 * x);
    row(8)[1] = C2[4] * (-2.0 * y);
    if (degree < 3) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    row(9)[0] = C3[0] * (6.0 * x * y);
    row(9)[1] = C3[0] * (3.0 * xx - 3.0 * yy);
    row(10)[0] = C3[1] * y * z;
    row(10)[1] = C3[1] * x * z;
    row(10)[2] = C3[1] * x * y;
    row(11)[0] = C3[2] * (-2.0 * x * y);
    row(11)[1] = C3[2] * (4.0 * zz - xx - 3.0 * yy);
    row(11)[2] = C3[2] * (8.0 * y * z);
    row(12)[0] = C3[3] * (-6.0 * x * z);
    row(12)[1] = C3[3] * (-6.0 * y * z);
    row(12)[2] = C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy);
    row(13)[0] = C3[4] * (4.0 * zz - 3.0 * xx - yy);
    row(13)[1] = C3[4] * (-2.0 * x * y);
    row(13)[2] = C3[4] * (8.0 * x * z);
    row(14)[0] = C3[5] * (2.0 * x * z);
    row(14)[1] = C3[5] * (-2.0 * y * z);
    row(14)[2] = C3[5] * (xx - yy);
    row(15)[0] = C3[6] * (3.0 * xx - 3.0 * yy);
    row(15)[1] = C3[6] * (-6.0 * x * y);
}

void sh_evaluate(const double dir[3], std::span<const double> coeffs, int degree, double rgb[3]) {
    const int k = sh_coeff_count(degree);
    if (int(coeffs.size()) != 3 * k)
        throw ShapeError("sh_evaluate: expected " + std::to_string(3 * k) + " coefficients, got " +
                         std::to_string(coeffs.size()));
    const double n2 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];
    if (std::abs(n2 - 1.0) > 2e-9)
        throw ContractError("sh_evaluate: direction not unit length");
    double basis[16];
    sh_basis(dir, degree, basis);
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const double* cc = coeffs.data() + size_t(c) * k;
        for (int i = 0; i < k; ++i) acc += basis[i] * cc[i];
        rgb[c] = acc;
    }
}

}  // namespace splat
