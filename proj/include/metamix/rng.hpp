#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace metamix {

using RngEngine = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Independent named streams derived from one master seed. Consumers that never
// draw from a stream leave every other stream untouched.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    return detail::splitmix64(master ^ detail::fnv1a(stream));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index) {
    return detail::splitmix64(derive_seed(master, stream) + 0x632be59bd9b4e019ULL * (index + 1));
}

inline RngEngine make_engine(std::uint64_t seed) { return RngEngine(seed); }

inline double uniform_real(RngEngine& eng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng);
}

inline double normal(RngEngine& eng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(eng);
}

inline double gamma_draw(RngEngine& eng, double shape) {
    std::gamma_distribution<double> d(shape, 1.0);
    return d(eng);
}

}  // namespace metamix
