#pragma once

#include <cstdint>

namespace rulegame {

/// splitmix64. Chosen because it is trivial to reproduce bit-for-bit in any
/// language, which keeps transcripts portable.
class SplitMix64 {
public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, n) as next() mod n. n must be nonzero.
  constexpr std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double unit() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t state() const noexcept { return state_; }

private:
  std::uint64_t state_;
};

/// Seed of sub-stream `index` under `master`: splitmix64(master XOR index).
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t index) noexcept {
  return SplitMix64(master ^ index).next();
}

} // namespace rulegame
