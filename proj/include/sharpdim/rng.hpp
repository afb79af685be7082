#pragma once

#include <cstdint>
#include <random>

namespace sharpdim {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of a root seed. Streams with distinct
/// (root, index) pairs are statistically independent, so parallel workers
/// can draw from them in any order and still reproduce a serial run.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(root) ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
}

inline Rng make_stream(std::uint64_t root, std::uint64_t index) {
  return Rng{stream_seed(root, index)};
}

}  // namespace sharpdim
