#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace adafuse {

inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;
/// Odd multiplier separating derived streams of one master seed.
inline constexpr std::uint64_t kStreamMultiplier = 0xD1B54A32D192ED03ULL;

/// SplitMix64 output finalizer.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// One SplitMix64 step: advances `state` by the golden gamma and returns the mixed output.
constexpr std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
  state += kSplitMixGamma;
  return splitmix64_mix(state);
}

/// Child seed for stream `stream_id` of `master_seed`:
/// the first SplitMix64 output from state (master_seed + stream_id * kStreamMultiplier).
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) noexcept {
  std::uint64_t state = master_seed + stream_id * kStreamMultiplier;
  return splitmix64_next(state);
}

/// Single-owner SplitMix64 generator. The whole state is the 64-bit counter, so
/// copying `state()` mid-sequence and rebuilding continues the sequence exactly.
class RngStream {
 public:
  explicit RngStream(std::uint64_t state = 0, std::uint64_t stream_id = 0) noexcept
      : state_(state), stream_id_(stream_id) {}

  std::uint64_t next_u64() noexcept { return splitmix64_next(state_); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes exactly two outputs.
  double next_normal() noexcept {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n), unbiased by rejection. n must be > 0.
  std::uint64_t next_index(std::uint64_t n) noexcept {
    const std::uint64_t limit = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= limit) return r % n;
    }
  }

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t state() const noexcept { return state_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  std::uint64_t state_;
  std::uint64_t stream_id_;
};

inline RngStream derive_stream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept {
  return RngStream(derive_seed(master_seed, stream_id), stream_id);
}

}  // namespace adafuse
