#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace surftune {

using rng_type = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent named substream of a master seed.
inline rng_type derive_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    return rng_type(splitmix64(splitmix64(master_seed) ^ splitmix64(stream_id + 0x5bd1e995ULL)));
}

/// Uniform in [0, 1) from the top 53 bits; stable across standard libraries.
inline double unit_uniform(rng_type& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(rng_type& rng, double lo, double hi) {
    return lo + (hi - lo) * unit_uniform(rng);
}

/// Uniform integer in [0, n), unbiased by rejection.
inline std::uint64_t uniform_index(rng_type& rng, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Fisher-Yates shuffle; output is identical across standard libraries.
template <class Container>
void shuffle(Container& c, rng_type& rng) {
    for (std::size_t i = c.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        using std::swap;
        swap(c[i - 1], c[j]);
    }
}

/// Standard normal via Box-Muller on unit_uniform.
inline double standard_normal(rng_type& rng) {
    double u1;
    do {
        u1 = unit_uniform(rng);
    } while (u1 <= 0.0);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace surftune
