#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

#include "icct/errors.hpp"

namespace icct {

// Seeded random source used for every random decision in the library.
//
// Generator: std::mt19937_64 (Mersenne Twister, 64-bit), whose integer
// stream is fully specified by the C++ standard and therefore identical
// on every platform for a given seed. Uniform doubles take the top 53
// bits; normals use the Marsaglia polar method (sqrt is correctly
// rounded per IEEE 754, log is the only libm-dependent call).
struct Rng {
    explicit Rng(std::uint64_t seed) : gen(seed) {}

    std::uint64_t next_u64() { return gen(); }

    // Uniform in (0, 1]: never returns 0 so log() stays finite.
    double uniform_unit() {
        return static_cast<double>((gen() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform in [-1, 1).
    double uniform_symmetric() { return 2.0 * uniform_unit() - 1.0; }

    // Standard normal via Marsaglia polar rejection. One spare value is
    // cached, so draws come in deterministic pairs.
    double normal_unit() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        double v = 0.0;
        double s = 0.0;
        do {
            u = uniform_symmetric();
            v = uniform_symmetric();
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double stddev) {
        if (stddev == 0.0) return mean;
        return mean + stddev * normal_unit();
    }

    // Bounded index draw via modulo; bias is < 2^-40 for n < 2^24, which
    // is far below anything observable at the sizes used here.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(gen() % static_cast<std::uint64_t>(n));
    }

    std::mt19937_64 gen;

private:
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// n samples from Normal(mean, stddev^2); reproducible by seed.
inline std::vector<double> rng_normal(Rng& rng, std::size_t n, double mean, double stddev) {
    if (stddev < 0.0) throw ConfigError("rng_normal: stddev must be >= 0");
    std::vector<double> out(n);
    for (auto& x : out) x = rng.normal(mean, stddev);
    return out;
}

// Deterministic Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        const std::size_t j = rng.index(i + 1);
        std::swap(items[i], items[j]);
    }
}

} // namespace icct
