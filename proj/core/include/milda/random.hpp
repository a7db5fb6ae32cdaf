#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace milda {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Rounds half away from zero.
inline long round_half_away(double x) { return std::lround(x); }

/// Fisher-Yates with an explicit uniform draw so the permutation does not
/// depend on the standard library's shuffle implementation.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(v[i - 1], v[pick(rng)]);
    }
}

inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle_in_place(idx, rng);
    return idx;
}

}  // namespace milda
