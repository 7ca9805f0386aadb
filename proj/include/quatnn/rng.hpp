#pragma once

// Seed derivation and the few samplers the library needs, hand-rolled on top
// of mt19937_64 so results are stable within a build and independent of
// standard-library distribution internals where it matters (shuffling,
// dropout masks).

#include <cstdint>
#include <random>
#include <vector>

namespace quatnn {

// splitmix64, the usual seed-scrambling finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic sub-seed for a named stream, e.g. derive_seed(s, 3, 17).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag0,
                                 std::uint64_t tag1 = 0) {
    return mix64(mix64(base ^ mix64(tag0)) ^ mix64(tag1 + 0x51ed270b8a03ULL));
}

inline double uniform01(std::mt19937_64& g) {
    // 53-bit mantissa in [0, 1).
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

inline double gaussian(std::mt19937_64& g) {
    // Marsaglia polar method; no state carried between calls.
    for (;;) {
        const double u = 2.0 * uniform01(g) - 1.0;
        const double v = 2.0 * uniform01(g) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
    return static_cast<std::size_t>(uniform01(g) * static_cast<double>(n)) % n;
}

// Fisher-Yates; stable across standard libraries, unlike std::shuffle.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(g, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace quatnn
