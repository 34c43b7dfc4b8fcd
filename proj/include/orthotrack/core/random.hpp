#pragma once

#include <cstdint>

namespace orthotrack {

/// splitmix64 finalizer over a pair; used to derive per-sample and per-step
/// seeds so results never depend on iteration order.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace orthotrack
