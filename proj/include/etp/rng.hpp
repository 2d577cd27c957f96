#pragma once

#include <cstdint>

namespace etp {

// Independent seed for a named random stream, derived from a base seed with
// the splitmix64 finalizer.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream ids used by the library.
enum RngStream : std::uint64_t {
  kStreamInit = 1,
  kStreamShuffle = 2,
  kStreamDataset = 3,
  kStreamIndexing = 4,
};

}  // namespace etp
