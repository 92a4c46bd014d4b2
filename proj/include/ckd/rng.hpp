#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ckd {

// Deterministic PRNG with explicit stream derivation. Parallel code derives
// one stream per work item (patient, tree, synthetic row, grid cell) so
// results do not depend on scheduling. All sampling is implemented here
// rather than with std:: distributions, which are not portable bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    // Derive an independent stream from a seed and up to three stream ids.
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t s = mix(seed ^ 0x9e3779b97f4a7c15ull);
        s = mix(s ^ mix(a + 0x1000001ull));
        s = mix(s ^ mix(b + 0x2000003ull));
        s = mix(s ^ mix(c + 0x3000005ull));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // multiply-shift; bias is negligible for n << 2^64
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal(double mean = 0.0, double sd = 1.0) {
        // Box-Muller, no cached spare: one draw consumes two uniforms
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(6.283185307179586476925287 * u2);
    }

    double exponential(double rate) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u) / rate;
    }

    std::int64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 60.0) {
            // Knuth product method
            const double limit = std::exp(-lambda);
            std::int64_t k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        // split recursively; keeps the product method in a safe range
        const double half = std::floor(lambda / 2.0);
        return poisson(half) + poisson(lambda - half);
    }

    double gamma(double shape, double scale) {
        // Marsaglia-Tsang squeeze; shape < 1 boosted via the standard power trick
        if (shape < 1.0) {
            const double u = std::max(uniform(), 1e-300);
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = std::max(uniform(), 1e-300);
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
                return d * v * scale;
        }
    }

    double lognormal(double mu, double sigma) { return std::exp(normal(mu, sigma)); }

    // mean `mean`, variance mean + mean^2/k (gamma-mixed Poisson); k <= 0 means plain Poisson
    std::int64_t neg_binomial(double mean, double k) {
        if (mean <= 0.0) return 0;
        if (k <= 0.0) return poisson(mean);
        return poisson(gamma(k, mean / k));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace ckd
