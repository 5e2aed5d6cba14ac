#pragma once

#include <cstdint>

namespace ddgen {

/// splitmix64 finalizer.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Independent stream seed for (seed, salt).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(salt + 0x632BE59BD9B4E019ull));
}

}  // namespace ddgen
