#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stt {

// Deterministic RNG. Only raw mt19937_64 outputs are used (the engine's
// output sequence is fixed by the standard); all derived draws go through
// our own transforms so results are identical across platforms and
// standard-library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform integer in [0, n), n > 0. Rejection sampling, unbiased.
    int below(int n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<uint64_t>(n);
        uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return static_cast<int>(r % static_cast<uint64_t>(n));
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller; second value cached.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        double z0 = mag * std::cos(2.0 * 3.141592653589793 * u2);
        spare_ = mag * std::sin(2.0 * 3.141592653589793 * u2);
        have_spare_ = true;
        return mean + stddev * z0;
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent seed streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace stt
