#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cqa {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ splitmix64(v));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
  for (unsigned char c : s) {
    h = (h ^ c) * 0x100000001b3ULL;
  }
  return mix_seed(seed, h);
}

/// Seed for one sample, derived from a base seed and the sample's identity,
/// so results do not depend on iteration order or thread scheduling.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) {
  std::uint64_t s = splitmix64(base);
  ((s = mix_seed(s, parts)), ...);
  return s;
}

using Rng = std::mt19937_64;

} // namespace cqa
