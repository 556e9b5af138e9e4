#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decoyqkd/simulation.hpp"
#include "decoyqkd/types.hpp"

namespace decoyqkd {

inline constexpr double kDefaultConfidence = 1.0 - 1e-6;
inline constexpr double kDefaultZThreshold = 5.0;
inline constexpr double kDefaultEcInefficiency = 1.22;
inline constexpr double kErroneousDarkFraction = 0.5;  // e0

/// Exact binomial (Clopper-Pearson) estimate. Each bound is one-sided at the
/// configured confidence, i.e. P(true p < lo) and P(true p > hi) are each at
/// most 1 - confidence; the one-sided form is what the sign-aware bound
/// plumbing consumes.
struct BinomialCi {
  double point = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
};

double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials, double confidence);
double clopper_pearson_upper(std::uint64_t successes, std::uint64_t trials, double confidence);
BinomialCi binomial_estimate(std::uint64_t successes, std::uint64_t trials, double confidence);

/// Dark-count yield from the vacuum-decoy tally: point estimate
/// detected/sifted with Clopper-Pearson bounds.
/// Throws EstimationError when there is no vacuum data; callers that must
/// proceed anyway should fall back to the conservative envelope lo=0, hi=1.
BinomialCi estimate_y0(const ClassTally& vacuum, double confidence = kDefaultConfidence);

struct SinglePhotonBound {
  double y1_lower = 0.0;  // lower bound on the single-photon yield
  double q1_lower = 0.0;  // implied single-photon gain: Y1 * mu * e^-mu
  bool clamped = false;   // raw formula value fell outside [0, 1]
};

/// Two-intensity decoy bound on the single-photon yield:
///   Y1 >= mu/(mu*nu - nu^2) * (Q_nu e^nu - Q_mu e^mu nu^2/mu^2
///                              - (mu^2 - nu^2)/mu^2 * y0)
/// obtained by eliminating the two-photon term between the gain expansions
/// and dropping the non-negative higher orders; exact inputs give
/// Y1_L <= Y1_true with equality in the nu -> 0 limit.
/// Pass the largest plausible y0 (its upper confidence bound) for a bound
/// that stays sound under sampling noise; y0 enters negatively, so
/// underestimating it inflates Y1_L.
/// Throws std::domain_error unless 0 < nu < mu.
SinglePhotonBound estimate_y1_lower(double mu, double q_mu, double nu, double q_nu, double y0);

struct SinglePhotonErrorBound {
  double e1_upper = 0.5;
  bool clamped = false;
};

/// Upper bound on the single-photon error rate from the weak decoy's
/// separately tallied error rate:
///   e1 <= (E_nu Q_nu e^nu - e0*y0) / (nu * y1_lower)
/// clamped into [0, 0.5]. y0 enters negatively here, so its lower confidence
/// bound is the conservative choice. y1_lower = 0 yields the clamp value 0.5
/// (no extractable single-photon key), not an error.
/// Throws std::domain_error for nu <= 0.
SinglePhotonErrorBound estimate_e1_upper(double nu, double q_nu, double e_nu, double y0,
                                         double y1_lower, double e0 = kErroneousDarkFraction);

/// H2(x) = -x log2 x - (1-x) log2 (1-x), with H2(0) = H2(1) = 0.
/// Throws std::domain_error outside [0, 1].
double binary_entropy(double x);

/// Secure key rate per pulse: error correction charged on everything sifted,
/// privacy amplification credited only to the bounded single-photon part.
///   R = max(0, q * (-Q_mu f_ec H2(E_mu) + q1_lower (1 - H2(e1_upper))))
double gllp_key_rate(double q, double f_ec, double q_mu, double e_mu, double q1_lower,
                     double e1_upper);

/// No-decoy worst case: every multi-photon pulse is assumed tagged, so the
/// single-photon gain credit is Q_mu minus the whole multi-photon emission
/// probability. Collapses to zero long before the decoy rate does.
double baseline_key_rate(double q, double f_ec, double q_mu, double e_mu, double mu);

struct ClassZScore {
  ClassLabel label = ClassLabel::kSignal;
  double mu = 0.0;
  std::uint64_t n_sifted = 0;
  double z_gain = 0.0;        // (Q_hat - Q_pred) / binomial sigma
  double z_error_gain = 0.0;  // same for E*Q
  bool skipped = false;
  std::string note;
};

struct AnomalyVerdict {
  bool flagged = false;
  bool qber_abort = false;  // signal QBER exceeded the abort threshold
  std::vector<ClassZScore> classes;

  std::string_view verdict() const { return flagged ? "flagged" : "clean"; }
};

/// Compares every class against the honest-channel prediction. A class is
/// anomalous when the gain or error-gain z-score exceeds z_threshold in
/// magnitude; the verdict is also flagged when the signal QBER exceeds
/// qber_abort_threshold (and, with decoy_qber_abort, when any decoy QBER
/// does). Classes without sifted pulses are skipped with a note.
AnomalyVerdict detect_anomaly(const ObservedStatistics& observed,
                              const ChannelDetector& reference,
                              double z_threshold = kDefaultZThreshold,
                              double qber_abort_threshold = 0.11,
                              bool decoy_qber_abort = false);

struct AnalysisParams {
  double confidence = kDefaultConfidence;
  double z_threshold = kDefaultZThreshold;
  double f_ec = kDefaultEcInefficiency;
  double sifting_factor = 0.5;  // q, from the protocol config
  double qber_abort_threshold = 0.11;
  bool decoy_qber_abort = false;
};

/// One evaluated estimate chain (y0 -> Y1/Q1 -> e1 -> R).
struct DecoyEstimate {
  BinomialCi y0;
  double y1_lower = 0.0;
  double q1_lower = 0.0;
  double e1_upper = 0.5;
  double r_decoy = 0.0;
  double r_baseline = 0.0;
  std::vector<std::string> clamps;
};

/// Full statistical analysis of one session.
///
/// `plug_in` feeds the raw point estimates through the formulas and is what
/// reports quote. `conservative` pushes every statistical input to its
/// sound-direction confidence bound (Q_mu up, Q_nu down, y0 up in the Y1 term
/// and down in the e1 numerator, E_nu Q_nu up), so its bounds stay sound
/// under sampling noise; `optimistic` is the opposite corner. Together they
/// bracket the exact-statistics chain at the configured confidence.
struct SessionAnalysis {
  DecoyEstimate plug_in;
  DecoyEstimate conservative;
  DecoyEstimate optimistic;
  AnomalyVerdict anomaly;
  double sifting_factor = 0.5;
  double f_ec = kDefaultEcInefficiency;
};

/// Runs estimators, key rates, and anomaly detection over per-class tallies.
/// Missing decoy classes degrade to documented conservative fallbacks (y0
/// envelope [0, 1], Y1_L = 0, e1 = 0.5) with clamp notes instead of failing.
SessionAnalysis analyze_session(const ObservedStatistics& observed,
                                const ChannelDetector& reference,
                                const AnalysisParams& params = {});

}  // namespace decoyqkd
