#pragma once

#include <cstdint>
#include <random>

namespace bclr {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream identified by (seed, index, tag).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                                    std::uint64_t tag = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ index) ^ (tag * 0xd1b54a32d192ed03ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index = 0,
                    std::uint64_t tag = 0) {
  return Rng(derive_seed(seed, index, tag));
}

}  // namespace bclr
