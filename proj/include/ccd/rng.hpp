#pragma once

#include <cstdint>
#include <random>

namespace ccd {

using Rng = std::mt19937_64;

// splitmix64 finalizer. Used to derive independent stream seeds from a base
// seed plus salts (variable indices, restart counters, row numbers) so that
// every randomized routine is reproducible and insensitive to call order.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt_a,
                                 std::uint64_t salt_b = 0) {
  std::uint64_t h = mix64(base ^ 0x6a09e667f3bcc908ULL);
  h = mix64(h ^ salt_a);
  h = mix64(h ^ salt_b);
  return h;
}

}  // namespace ccd
