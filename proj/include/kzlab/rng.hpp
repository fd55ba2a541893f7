#pragma once

#include <cstdint>
#include <random>

namespace kzlab {

using Rng = std::mt19937_64;

// Stream tags keep substreams of different subsystems apart even when they
// share a seed and an index.
enum class StreamTag : std::uint32_t {
  kTrajectory = 1,
  kInitialCondition = 2,
  kCollisionBlock = 3,
};

// Deterministic substream for (seed, index, tag).
inline Rng make_stream(std::uint64_t seed, std::uint64_t index, StreamTag tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

}  // namespace kzlab
