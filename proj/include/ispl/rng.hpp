#pragma once

#include <cstdint>
#include <random>

namespace ispl {

// splitmix64 step; used to derive independent sub-seeds so that parallel and
// serial runs draw identical streams per item.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t index) {
    return mix64(base ^ mix64(index + 0x51ed2701ULL));
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {  // inclusive
    return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

// Box-Muller; avoids std::normal_distribution's unspecified internal caching
// so streams stay stable across library versions.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u1 = 0.0;
    do {
        u1 = u01(rng);
    } while (u1 <= 1e-300);
    const double u2 = u01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.141592653589793238462643 * u2);
}

}  // namespace ispl
