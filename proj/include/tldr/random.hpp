#pragma once

// Portable seeded randomness. std::mt19937_64 has a fully specified output
// sequence; the distributions below are spelled out here instead of relying
// on the implementation-defined std:: distributions.

#include <cstdint>
#include <random>
#include <string_view>

namespace tldr {

using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection on the raw 64-bit output.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  std::uint64_t x = rng();
  while (x > limit) x = rng();
  return x % bound;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SplitMix64 finaliser over (seed, salt); used to derive per-item seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tldr
