#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace decoyqkd {

// Configuration file / spec validation failure. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Statistical estimation cannot proceed (e.g. no vacuum-decoy data).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Report emission failure. CLI maps this to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ClassLabel : std::uint8_t {
  kSignal,
  kVacuumDecoy,
  kWeakDecoy,
  kHwangDecoy,
};

std::string_view to_string(ClassLabel label);

/// One pulse class of the source: its mean photon number and how often it is
/// sent. The vacuum decoy has mean 0 by definition; the weak decoy must be
/// strictly dimmer than the signal.
struct IntensityClass {
  ClassLabel label = ClassLabel::kSignal;
  double mean_photon_number = 0.0;  // mu
  double send_probability = 0.0;

  bool operator==(const IntensityClass&) const = default;
};

using SourceSchedule = std::vector<IntensityClass>;

inline constexpr double kScheduleProbabilityTolerance = 1e-12;

/// Validates per-class invariants plus the schedule-wide ones (at most one
/// class per label, send probabilities summing to 1). With `require_signal`
/// the schedule must contain exactly one signal class; without it degenerate
/// schedules (e.g. vacuum-only calibration runs) are accepted.
/// Throws ConfigError naming the offending field, e.g. "weak_decoy.mu".
void validate_schedule(const SourceSchedule& schedule, bool require_signal);

/// Fiber channel plus threshold detector. The derived overall transmittance
/// eta = 10^(-(attenuation*distance + extra_loss)/10) * detector_efficiency
/// must be positive; the dark-count probability may exceed it (high-loss
/// operation is a supported regime, not an error).
struct ChannelDetector {
  double distance_km = 50.0;
  double attenuation_db_per_km = 0.2;
  double extra_loss_db = 0.0;
  double detector_efficiency = 0.1;
  double dark_count_prob = 1e-5;      // Y0: click probability with no photon
  double misalignment_error = 0.01;   // e_d: wrong-bit probability per photon click
  double erroneous_dark_fraction = 0.5;  // e0: dark clicks carry random bits

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

}  // namespace decoyqkd
