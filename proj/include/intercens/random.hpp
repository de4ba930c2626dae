#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace intercens {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Seed for an independent stream identified by (seed, path...). Streams for
/// replicates and chains are derived this way so results never depend on
/// which worker ran them.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = detail::splitmix64(seed);
    for (auto p : path) h = detail::splitmix64(h ^ detail::splitmix64(p + 0x632BE59BD9B4E019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
    return Rng(derive_seed(seed, path));
}

/// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
    for (;;) {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        if (u > 0.0) return u;
    }
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace intercens
