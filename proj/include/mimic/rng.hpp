// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Seed derivation. Every random stream in the library is an std::mt19937_64
// seeded from a hash of (run seed, stream labels), so results do not depend on
// evaluation order or thread count.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mimic {

/// splitmix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) {
    std::uint64_t h = mix64(seed);
    for (auto l : labels) h = mix64(h ^ mix64(l + 0x632BE59BD9B4E019ULL));
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) {
    return std::mt19937_64(derive_seed(seed, labels));
}

/// Uniform in [0, 1).
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace mimic
