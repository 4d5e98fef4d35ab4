#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace cohere {

/// Named sub-stream of a root seed: the same (seed, path) always yields the
/// same engine state, independent of any other stream.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// Stream ids used across the library.
enum class Stream : std::uint64_t {
  SceneSweep = 1,
  SampleForeground = 2,
  SampleBackground = 3,
  Dropout = 4,
  EncoderInit = 5,
  CameraDepth = 6,
  GradCheck = 7,
};

inline std::uint64_t id(Stream s) { return static_cast<std::uint64_t>(s); }

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace cohere
