#pragma once

#include <array>
#include <span>

#include "splat/common.hpp"

namespace splat {

// Real spherical harmonics basis, 3DGS constants and band ordering, degree <= 3.

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Basis values at unit direction d. Writes (degree+1)^2 values into `out`.
void sh_basis(const double d[3], int degree, double* out);

// d(basis_k)/d(direction_j), row-major K x 3.
void sh_basis_dir_grad(const double d[3], int degree, double* out);

// Evaluates RGB from per-channel coefficient blocks laid out channel-major:
// coeffs[c*K .. c*K+K-1] for channel c, K = (degree+1)^2.
// Direction must be unit length within 1e-9. No clamping here.
void sh_evaluate(const double dir[3], std::span<const double> coeffs, int degree, double rgb[3]);

}  // namespace splat
