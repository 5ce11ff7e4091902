#pragma once
// Seeded randomness. Every stochastic routine takes an Rng& so nothing reads
// global state; streams are derived from (master seed, index, label).

#include <cstdint>
#include <random>
#include <string_view>

namespace acuity {

using Rng = std::mt19937_64;

// Uniform draw on the open interval (0, 1), built from the top 53 bits so the
// sequence is identical on every standard library.
inline double uniform01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent stream seed for run `index` of the stream named `label`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 std::string_view label) {
    return splitmix64(splitmix64(master ^ fnv1a(label)) + splitmix64(index));
}

}  // namespace acuity
