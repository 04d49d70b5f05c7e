#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cgrl {

// splitmix64 finalizer; the basis of all seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seed derivation scheme: a master seed expands into named sub-streams
// (e.g. "data", "rollout", "init", "probe"); each stream expands further by
// integer indices. Indexed derivation is pure, so consumers can be enabled
// or disabled without shifting each other's randomness, and work scheduled
// in any order sees the same seeds.
struct SeedStream {
  std::uint64_t state = 0;

  static SeedStream root(std::uint64_t master) { return {mix64(master)}; }

  SeedStream sub(std::string_view name) const {
    return {mix64(state ^ fnv1a64(name))};
  }
  SeedStream at(std::uint64_t index) const {
    return {mix64(state + 0x9e3779b97f4a7c15ull * (index + 1))};
  }
  std::mt19937_64 engine() const { return std::mt19937_64{state}; }
};

// Canonical uniform double in [0, 1) with 53 bits; avoids the
// implementation-defined std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_below(std::mt19937_64& eng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = eng();
    if (x >= threshold) return x % n;
  }
}

}  // namespace cgrl
