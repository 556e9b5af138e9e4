#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "decoyqkd/types.hpp"

namespace decoyqkd {

/// Eavesdropper model. `kPns` is the photon-number-splitting strategy: a
/// nondemolition photon-number measurement, after which single-photon pulses
/// are blocked with probability `single_block_prob`, and multi-photon pulses
/// lose exactly one photon to Eve while the remaining n-1 are forwarded —
/// through the normal lossy channel, or through Eve's own line when
/// `forward_transmittance_override` is set (each forwarded photon is then
/// detected with that probability instead of the channel transmittance).
struct EveStrategy {
  enum class Kind : std::uint8_t { kNone, kPns };

  Kind kind = Kind::kNone;
  double single_block_prob = 1.0;
  std::optional<double> forward_transmittance_override;

  static EveStrategy none() { return EveStrategy{}; }
  static EveStrategy pns(double block_prob,
                         std::optional<double> override_transmittance = std::nullopt) {
    return EveStrategy{Kind::kPns, block_prob, override_transmittance};
  }

  void validate() const;
};

enum class EveAction : std::uint8_t {
  kPass,
  kBlocked,
  kSplit,  // Eve kept one photon, n-1 forwarded
};

std::string_view to_string(EveAction action);

/// Life of a single pulse, retained only when tracing is requested.
struct PulseRecord {
  std::uint64_t index = 0;
  ClassLabel label = ClassLabel::kSignal;
  std::uint32_t photons_emitted = 0;
  std::uint8_t alice_bit = 0;
  std::uint8_t alice_basis = 0;
  EveAction eve_action = EveAction::kPass;
  std::uint32_t photons_arrived = 0;
  bool clicked = false;
  std::int8_t bob_bit = -1;  // -1 = no click, no bit
  std::uint8_t bob_basis = 0;
};

struct ProtocolConfig {
  SourceSchedule schedule;
  std::uint64_t pulses_total = 1'000'000;
  ChannelDetector channel;
  double basis_match_prob = 0.5;  // q: probability a pulse survives sifting
  std::uint64_t rng_seed = 42;
  double qber_abort_threshold = 0.11;

  /// Library-level validation accepts degenerate schedules (no signal class)
  /// so calibration runs such as vacuum-only sessions work; the config loader
  /// passes require_signal = true.
  void validate(bool require_signal = false) const;
};

/// Counts for one intensity class after sifting.
struct ClassTally {
  IntensityClass cls;
  std::uint64_t sent = 0;
  std::uint64_t sifted = 0;
  std::uint64_t detected_sifted = 0;
  std::uint64_t errors_sifted = 0;

  double observed_gain() const {  // Q_hat
    return sifted > 0 ? static_cast<double>(detected_sifted) / static_cast<double>(sifted) : 0.0;
  }
  double observed_qber() const {  // E_hat
    const std::uint64_t denom = detected_sifted > 0 ? detected_sifted : 1;
    return static_cast<double>(errors_sifted) / static_cast<double>(denom);
  }
  double observed_error_gain() const {  // E_hat * Q_hat = errors/sifted
    return sifted > 0 ? static_cast<double>(errors_sifted) / static_cast<double>(sifted) : 0.0;
  }

  bool operator==(const ClassTally&) const = default;
};

/// Per-class tallies in schedule order. This per-intensity separation is the
/// protocol's data product: every downstream estimate reads from it.
struct ObservedStatistics {
  std::vector<ClassTally> classes;

  const ClassTally* find(ClassLabel label) const;
  ClassTally* find(ClassLabel label);
  std::uint64_t total_sent() const;

  /// Element-wise sum; requires identical schedules. Associative and
  /// commutative, so shard merge order never matters.
  void merge(const ObservedStatistics& other);

  bool operator==(const ObservedStatistics&) const = default;
};

inline constexpr std::uint64_t kMaxTracePulses = 100'000;

struct SessionOptions {
  bool keep_trace = false;
  /// 0 resolves from the DECOYQKD_WORKERS environment variable, falling back
  /// to the hardware thread count. Results are identical for any value.
  int workers = 0;
};

struct SessionResult {
  ObservedStatistics statistics;
  std::optional<std::vector<PulseRecord>> trace;
};

/// Eve's reaction to a pulse of known photon number. `rng_draw` in [0, 1)
/// decides probabilistic blocking.
EveAction pns_decision(std::uint32_t photon_number, const EveStrategy& eve, double rng_draw);

/// Runs one BB84-with-decoys session: class choice, Poisson photon number,
/// Eve, channel/detector sampling, sifting and per-class tallying.
///
/// Randomness: pulse i consumes draws from pulse_stream(seed, i) in this
/// fixed order — class, photon number, Alice bit, Alice basis, Eve decision,
/// one draw per arriving photon, dark count, Bob basis, bit/error draw.
/// Identical (config, eve, seed) gives bit-identical statistics for any
/// worker count.
///
/// Detector semantics: the dark-count process and each arriving photon fire
/// independently; a click with photons errs with probability e_d, a dark-only
/// click carries a random bit, and when both fire the bit is assigned
/// uniformly at random (squashing convention).
///
/// Throws ConfigError for invalid configs and std::invalid_argument when a
/// trace is requested for more than kMaxTracePulses pulses.
SessionResult run_session(const ProtocolConfig& config, const EveStrategy& eve,
                          const SessionOptions& options = {});

/// Groups finished pulse records by class, discards basis mismatches and
/// produces the same tallies run_session accumulates inline. Empty input
/// yields all-zero counts.
ObservedStatistics sift_and_tally(const SourceSchedule& schedule,
                                  std::span<const PulseRecord> records);

/// Trace dump, one record per line:
/// index,class,n_emitted,alice_bit,alice_basis,eve_action,n_arrived,clicked,bob_bit,bob_basis
/// The bob_bit cell is empty when Bob saw no click.
void write_trace_csv(std::span<const PulseRecord> records, std::ostream& out);

/// Requested count if positive, else DECOYQKD_WORKERS, else hardware threads.
int resolve_worker_count(int requested);

}  // namespace decoyqkd
