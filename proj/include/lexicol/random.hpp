#pragma once

#include <cstdint>
#include <initializer_list>

// Counter-based pseudo-random numbers. Every draw is a pure function of
// (key, counter): the SplitMix64 output function applied to
// key + (counter + 1) * golden_gamma. Streams for different purposes are
// separated by deriving distinct keys, so results never depend on the order
// in which unrelated components consume randomness.

namespace lexicol::rng {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t bits(std::uint64_t key, std::uint64_t counter) noexcept {
  return mix64(key + (counter + 1) * kGoldenGamma);
}

/// Derives a stream key from a seed and a list of domain labels.
constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> labels) noexcept {
  std::uint64_t k = mix64(seed ^ 0x243F6A8885A308D3ULL);
  for (std::uint64_t label : labels) k = mix64(k ^ mix64(label + kGoldenGamma));
  return k;
}

/// Uniform double in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t b) noexcept {
  return static_cast<double>(b >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by 128-bit multiply-high; bound > 0.
inline std::uint64_t to_below(std::uint64_t b, std::uint64_t bound) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(b) * bound) >> 64);
}

/// Sequential view over one counter-based stream.
class Stream {
public:
  constexpr explicit Stream(std::uint64_t key, std::uint64_t start = 0) noexcept
      : key_(key), counter_(start) {}

  constexpr std::uint64_t next_bits() noexcept { return bits(key_, counter_++); }
  constexpr double next_unit() noexcept { return to_unit(next_bits()); }
  std::uint64_t next_below(std::uint64_t bound) noexcept { return to_below(next_bits(), bound); }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t position() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

// Domain labels for derive_key.
enum class Domain : std::uint64_t {
  kSplitTrain = 1,
  kSplitTest = 2,
  kSampler = 3,
  kInit = 4,
  kDropout = 5,
  kPartitionTies = 6,
};

constexpr std::uint64_t label(Domain d) noexcept { return static_cast<std::uint64_t>(d); }

}  // namespace lexicol::rng
