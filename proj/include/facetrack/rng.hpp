#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ft {

// Deterministic RNG wrapper. The std:: distributions are implementation
// defined, so uniform/normal are generated explicitly here to keep seeded
// runs reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(mix(seed)), gen_(seed_) {}

    // Derive an independent stream, e.g. one per frame or per module.
    Rng fork(uint64_t stream) const { return Rng(seed_ ^ mix(stream ^ 0xabcdef12345ULL)); }

    double uniform() {
        // 53-bit mantissa in [0,1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one spare value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    uint64_t next_u64() { return gen_(); }

    // Uniform integer in [0, n)
    uint64_t uniform_index(uint64_t n) {
        // modulo bias is irrelevant at the scales used here (n << 2^64)
        return gen_() % n;
    }

private:
    static uint64_t mix(uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    uint64_t seed_ = 0;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ft
