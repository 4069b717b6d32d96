#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace splat {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRtol = 1e-3;
inline constexpr double kFdAtol = 1e-8;

inline bool fd_close(double analytic, double numeric, double rtol = kFdRtol,
                     double atol = kFdAtol) {
    const double diff = analytic > numeric ? analytic - numeric : numeric - analytic;
    const double mag = std::max(analytic < 0 ? -analytic : analytic,
                                numeric < 0 ? -numeric : numeric);
    return diff <= atol + rtol * mag;
}

// Central-difference comparison (step kFdStep). `params` points at the live
// parameter storage `forward` reads; `analytic[i]` is the claimed gradient for
// `params[i]`. Returns "" on success, else a message naming the first failing
// parameter.
std::string compare_gradients(const std::function<double()>& forward,
                              const std::vector<std::pair<std::string, double*>>& params,
                              const std::vector<double>& analytic, double step = kFdStep,
                              double rtol = kFdRtol, double atol = kFdAtol);

struct SuiteResult {
    std::string name;
    bool ok = false;
    int checked = 0;       // number of parameters compared
    std::string failure;   // empty when ok
};

// Eq. 9/11 kernels: finite differences plus the exact gradient-ratio identity.
SuiteResult check_opacity(std::uint64_t seed);
// Full rasterizer backward on a 5-gaussian 16x16 scene, all parameter classes,
// all three render modes.
SuiteResult check_rasterizer(std::uint64_t seed);
// Field networks end to end: encoder/decoder/colorMLP/generator weights,
// embeddings, and positions through bilinear sampling + positional encoding,
// with the contrastive terms in the loss.
SuiteResult check_field(std::uint64_t seed);

// cases: "all", "opacity", "rasterizer", or "field".
std::vector<SuiteResult> run_gradcheck(const std::string& cases, std::uint64_t seed);

}  // namespace splat
