#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace qan {

using Engine = std::mt19937_64;

/// Engine seeded from a user seed plus stream identifiers, so that independent
/// parts of a run (transmitter, window, purpose) draw from unrelated streams.
inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

/// SplitMix64 finalizer. Used as a counter-based generator: mix(key ^ f(index))
/// yields an independent-looking 64-bit word per index without storing state.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits of a word.
constexpr double to_unit(std::uint64_t w) {
  return static_cast<double>(w >> 11) * 0x1.0p-53;
}

}  // namespace qan
