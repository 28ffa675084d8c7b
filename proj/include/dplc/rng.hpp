#pragma once

#include <cstdint>
#include <random>

namespace dplc {

// splitmix64 finalizer, used to derive independent stream seeds from
// (base_seed, index...) tuples.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t seed_hash(std::uint64_t seed, std::uint64_t a) {
  return mix64(mix64(seed) ^ a);
}

inline std::uint64_t seed_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix64(seed_hash(seed, a) ^ mix64(b));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(mix64(seed));
}

}  // namespace dplc
