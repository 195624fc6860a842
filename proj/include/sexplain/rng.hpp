#ifndef SEXPLAIN_RNG_HPP
#define SEXPLAIN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace sexplain {

// mt19937_64 engine with explicit value mappings, so streams are
// bit-reproducible independent of the standard library's distribution
// implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed), seed_mix_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling over the largest multiple of n
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without caching, deterministic draw order
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent child stream; used to make per-image augmentation
    // independent of worker partitioning.
    Rng split(std::uint64_t salt) const {
        std::uint64_t s = seed_mix_ ^ (salt * 0x9E3779B97F4A7C15ull);
        return Rng(s ^ (s >> 31));
    }

private:
    std::mt19937_64 eng_;
    std::uint64_t seed_mix_ = 0;
};

}  // namespace sexplain

#endif
