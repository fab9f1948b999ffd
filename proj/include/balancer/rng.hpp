#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace balancer {

/// splitmix64 finalizer. Bijective on 64-bit ints with good avalanche, which is
/// all stream derivation needs.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and an index path,
/// e.g. (master, {cell, allocator, replication}). Replications seeded this way
/// are order- and thread-schedule-independent.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t k : path) s = mix64(s ^ mix64(k));
  return s;
}

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(mix64(seed)); }

inline std::mt19937_64 make_stream(std::uint64_t master,
                                   std::initializer_list<std::uint64_t> path) {
  return std::mt19937_64(derive_seed(master, path));
}

}  // namespace balancer
