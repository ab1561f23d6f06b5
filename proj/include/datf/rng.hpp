#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace datf::rng {

// mt19937_64 output is pinned by the standard; the draw helpers below avoid
// std::uniform_*_distribution (whose mapping is implementation-defined) so
// generated datasets and initializations are reproducible across toolchains.
using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream derived from (seed, stream tag).
inline Engine derive(std::uint64_t seed, std::uint64_t stream) {
    return Engine(splitmix64(seed ^ splitmix64(stream)));
}

// Unbiased integer in [0, bound) by rejection.
inline std::uint64_t below(Engine& eng, std::uint64_t bound) {
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % bound;
}

// Uniform double in [0, 1) with 53 bits.
inline double unit(Engine& eng) { return (eng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& eng, double lo, double hi) { return lo + (hi - lo) * unit(eng); }

// Inclusive integer range.
inline int uniform_int(Engine& eng, int lo, int hi) {
    return lo + static_cast<int>(below(eng, static_cast<std::uint64_t>(hi - lo) + 1));
}

// Fisher-Yates with pinned draw order.
template <typename T>
void shuffle(std::vector<T>& items, Engine& eng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(eng, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace datf::rng
