#pragma once

#include <cstdint>

namespace decoyqkd {

// SplitMix64 finalizer; bijective on 64-bit words.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-style SplitMix64 stream with a per-stream increment (the
/// "split" construction: distinct odd gammas give distinct stream
/// trajectories, so per-pulse streams never share subsequences in practice).
/// A pulse's randomness is a pure function of (session seed, pulse index),
/// which makes tallies independent of how pulses are sharded across workers.
class PulseRng {
 public:
  PulseRng(std::uint64_t state, std::uint64_t gamma)
      : state_(state), gamma_(gamma | 1ULL) {}

  std::uint64_t next_u64() {
    state_ += gamma_;
    return mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint8_t next_bit() { return static_cast<std::uint8_t>(next_u64() >> 63); }

 private:
  std::uint64_t state_;
  std::uint64_t gamma_;
};

/// Stream for one pulse. Draw order within a pulse is fixed and documented in
/// simulation.hpp; no draw of one pulse ever affects another pulse.
inline PulseRng pulse_stream(std::uint64_t session_seed, std::uint64_t pulse_index) {
  const std::uint64_t state = mix64(session_seed ^ mix64(pulse_index));
  const std::uint64_t gamma = mix64(pulse_index ^ 0xDA3E39CB94B95BDBULL);
  return PulseRng(state, gamma);
}

/// Session seed for one sweep point. Keyed to the point's distance (at
/// millimetre resolution), not its position in the sweep, so adding or
/// removing sweep points leaves every other point's random stream intact.
inline std::uint64_t point_seed(std::uint64_t base_seed, double distance_km) {
  const auto key = static_cast<std::uint64_t>(
      static_cast<std::int64_t>(distance_km * 1e6 + (distance_km >= 0 ? 0.5 : -0.5)));
  return base_seed ^ mix64(key);
}

}  // namespace decoyqkd
