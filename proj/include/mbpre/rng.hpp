#ifndef MBPRE_RNG_HPP
#define MBPRE_RNG_HPP

#include <cstdint>
#include <random>

namespace mbpre {

using Rng = std::mt19937_64;

// splitmix64: derive decorrelated child seeds from (seed, stream, ...) tuples
// so parallel replicas are reproducible independently of scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ stream);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix64(derive_seed(seed, a) ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(derive_seed(seed, stream));
}

}  // namespace mbpre

#endif
