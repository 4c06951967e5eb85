#pragma once

#include <cstdint>
#include <random>

namespace vqar {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent, order-free seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed of substream (a, b) under `root`. Depends only on the triple, so a
// stream's draws do not change when other streams are added or removed.
inline std::uint64_t substream_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(mix64(root) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

inline Rng make_substream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(substream_seed(root, a, b));
}

}  // namespace vqar
