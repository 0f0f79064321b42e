#pragma once

#include <cstdint>
#include <random>

namespace cdcor {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator for one purpose (stream) under one user seed.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed270b2f2a3a5fULL)));
}

// Stream identifiers; values are part of the reproducibility contract.
namespace streams {
inline constexpr std::uint64_t kSplitSource = 1;
inline constexpr std::uint64_t kSplitTarget = 2;
inline constexpr std::uint64_t kTestCandidates = 3;
inline constexpr std::uint64_t kValidationCandidates = 4;
inline constexpr std::uint64_t kSparsity = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kNegatives = 7;
inline constexpr std::uint64_t kBatches = 8;
inline constexpr std::uint64_t kSynth = 9;
}  // namespace streams

}  // namespace cdcor
