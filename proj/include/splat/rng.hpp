#pragma once

#include <cmath>
#include <cstdint>

namespace splat {

// Small counter-free PCG-style generator. std::mt19937 + std::normal_distribution
// would work, but the distribution output is implementation-defined; this keeps
// every seeded run bit-reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        state_ = seed + 0x9E3779B97F4A7C15ull;
        next_u64();
    }

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. The second value of each pair is
    // discarded so the generator state stays a single u64 (checkpointable).
    double gauss() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        return r * std::cos(a);
    }

    std::uint64_t raw_state() const { return state_; }
    void set_raw_state(std::uint64_t s) { state_ = s; }

  private:
    std::uint64_t state_ = 0;
};

}  // namespace splat
