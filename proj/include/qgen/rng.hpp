#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qgen/tensor.hpp"

namespace qgen {

// Deterministic pseudo-random stream. mt19937_64 output is pinned by the
// standard; the float/int constructions below avoid std::distribution types,
// whose results are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t randint(std::uint64_t n) {
        // rejection sampling keeps the distribution exact
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller on our own uniforms.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(randint(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream; distinct ids give decorrelated streams.
    Rng split(std::uint64_t stream_id) {
        std::uint64_t z = seed_mix_ + stream_id + 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z = z ^ (z >> 31);
        return Rng(z ^ engine_());
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_mix_ = 0x2545f4914f6cdd1dull;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Uniform initialization in [-scale, +scale].
inline Tensor init_params(std::vector<int> shape, double scale, Rng& rng) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

}  // namespace qgen
