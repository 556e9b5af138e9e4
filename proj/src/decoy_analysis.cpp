#include "decoyqkd/decoy_analysis.hpp"

#include <boost/math/distributions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "decoyqkd/models.hpp"

namespace decoyqkd {

namespace {

void require_unit_interval(double value, const char* what) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::domain_error(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (successes > trials) {
    throw std::invalid_argument("clopper_pearson_lower: successes > trials");
  }
  require_unit_interval(confidence, "confidence");
  if (trials == 0 || successes == 0) return 0.0;
  const double alpha = 1.0 - confidence;
  const boost::math::beta_distribution<double> dist(static_cast<double>(successes),
                                                    static_cast<double>(trials - successes) + 1.0);
  return boost::math::quantile(dist, alpha);
}

double clopper_pearson_upper(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (successes > trials) {
    throw std::invalid_argument("clopper_pearson_upper: successes > trials");
  }
  require_unit_interval(confidence, "confidence");
  if (trials == 0) return 1.0;
  if (successes == trials) return 1.0;
  const boost::math::beta_distribution<double> dist(static_cast<double>(successes) + 1.0,
                                                    static_cast<double>(trials - successes));
  return boost::math::quantile(dist, confidence);
}

BinomialCi binomial_estimate(std::uint64_t successes, std::uint64_t trials, double confidence) {
  BinomialCi ci;
  ci.trials = trials;
  ci.successes = successes;
  ci.point = trials > 0 ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0;
  ci.lo = clopper_pearson_lower(successes, trials, confidence);
  ci.hi = clopper_pearson_upper(successes, trials, confidence);
  return ci;
}

BinomialCi estimate_y0(const ClassTally& vacuum, double confidence) {
  if (vacuum.cls.label != ClassLabel::kVacuumDecoy) {
    throw EstimationError(
        "estimate_y0 needs the vacuum-decoy tally; without one fall back to the conservative "
        "envelope y0 in [0, 1]");
  }
  if (vacuum.sifted == 0) {
    throw EstimationError(
        "no sifted vacuum-decoy pulses; fall back to the conservative envelope y0 in [0, 1]");
  }
  return binomial_estimate(vacuum.detected_sifted, vacuum.sifted, confidence);
}

SinglePhotonBound estimate_y1_lower(double mu, double q_mu, double nu, double q_nu, double y0) {
  if (!(nu > 0.0) || !(nu < mu)) {
    throw std::domain_error("estimate_y1_lower requires 0 < nu < mu");
  }
  require_unit_interval(q_mu, "Q_mu");
  require_unit_interval(q_nu, "Q_nu");
  require_unit_interval(y0, "y0");
  const double raw = mu / (mu * nu - nu * nu) *
                     (q_nu * std::exp(nu) - q_mu * std::exp(mu) * (nu * nu) / (mu * mu) -
                      (mu * mu - nu * nu) / (mu * mu) * y0);
  SinglePhotonBound bound;
  bound.y1_lower = std::clamp(raw, 0.0, 1.0);
  bound.clamped = raw != bound.y1_lower;
  bound.q1_lower = bound.y1_lower * mu * std::exp(-mu);
  return bound;
}

namespace {

// Same bound with the E_nu*Q_nu product supplied directly; the statistical
// path estimates that product as one binomial proportion (errors / sifted).
SinglePhotonErrorBound e1_upper_from_error_gain(double nu, double error_gain_nu, double y0,
                                                double y1_lower, double e0) {
  if (!(nu > 0.0)) {
    throw std::domain_error("estimate_e1_upper requires nu > 0");
  }
  require_unit_interval(error_gain_nu, "E_nu*Q_nu");
  require_unit_interval(y0, "y0");
  require_unit_interval(e0, "e0");
  SinglePhotonErrorBound bound;
  if (!(y1_lower > 0.0)) {
    bound.e1_upper = 0.5;  // no single-photon key extractable
    bound.clamped = true;
    return bound;
  }
  const double raw = (error_gain_nu * std::exp(nu) - e0 * y0) / (nu * y1_lower);
  bound.e1_upper = std::clamp(raw, 0.0, 0.5);
  bound.clamped = raw != bound.e1_upper;
  return bound;
}

}  // namespace

SinglePhotonErrorBound estimate_e1_upper(double nu, double q_nu, double e_nu, double y0,
                                         double y1_lower, double e0) {
  require_unit_interval(q_nu, "Q_nu");
  require_unit_interval(e_nu, "E_nu");
  return e1_upper_from_error_gain(nu, e_nu * q_nu, y0, y1_lower, e0);
}

double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("binary_entropy: argument must lie in [0, 1]");
  }
  double h = 0.0;
  if (x > 0.0) h -= x * std::log2(x);
  if (x < 1.0) h -= (1.0 - x) * std::log2(1.0 - x);
  return h;
}

double gllp_key_rate(double q, double f_ec, double q_mu, double e_mu, double q1_lower,
                     double e1_upper) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::domain_error("gllp_key_rate: q must lie in (0, 1]");
  }
  if (!(f_ec >= 1.0)) {
    throw std::domain_error("gllp_key_rate: f_ec must be >= 1");
  }
  require_unit_interval(q_mu, "Q_mu");
  require_unit_interval(e_mu, "E_mu");
  require_unit_interval(q1_lower, "Q1_lower");
  require_unit_interval(e1_upper, "e1_upper");
  const double rate =
      q * (-q_mu * f_ec * binary_entropy(e_mu) + q1_lower * (1.0 - binary_entropy(e1_upper)));
  return std::max(0.0, rate);
}

double baseline_key_rate(double q, double f_ec, double q_mu, double e_mu, double mu) {
  if (!(mu >= 0.0)) {
    throw std::domain_error("baseline_key_rate: mu must be >= 0");
  }
  const double p_multi = 1.0 - std::exp(-mu) * (1.0 + mu);
  const double q1_worst = std::max(0.0, q_mu - p_multi);
  const double e1_worst =
      std::min(0.5, e_mu * q_mu / std::max(q1_worst, std::numeric_limits<double>::min()));
  return gllp_key_rate(q, f_ec, q_mu, e_mu, q1_worst, e1_worst);
}

namespace {

double proportion_z(double observed, double predicted, std::uint64_t n) {
  const double variance = predicted * (1.0 - predicted) / static_cast<double>(n);
  if (variance <= 0.0) {
    if (observed == predicted) return 0.0;
    return observed > predicted ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
  }
  return (observed - predicted) / std::sqrt(variance);
}

bool is_decoy(ClassLabel label) { return label != ClassLabel::kSignal; }

}  // namespace

AnomalyVerdict detect_anomaly(const ObservedStatistics& observed, const ChannelDetector& reference,
                              double z_threshold, double qber_abort_threshold,
                              bool decoy_qber_abort) {
  reference.validate();
  if (!(z_threshold > 0.0)) {
    throw std::domain_error("detect_anomaly: z_threshold must be > 0");
  }
  AnomalyVerdict verdict;
  for (const ClassTally& tally : observed.classes) {
    ClassZScore score;
    score.label = tally.cls.label;
    score.mu = tally.cls.mean_photon_number;
    score.n_sifted = tally.sifted;
    if (tally.sifted == 0) {
      score.skipped = true;
      score.note = "no sifted pulses; class skipped";
      verdict.classes.push_back(std::move(score));
      continue;
    }
    const GainQber predicted = expected_gain_qber(tally.cls.mean_photon_number, reference);
    score.z_gain = proportion_z(tally.observed_gain(), predicted.gain, tally.sifted);
    score.z_error_gain =
        proportion_z(tally.observed_error_gain(), predicted.error_gain, tally.sifted);
    if (std::abs(score.z_gain) > z_threshold || std::abs(score.z_error_gain) > z_threshold) {
      verdict.flagged = true;
    }
    const bool abort_applies =
        tally.cls.label == ClassLabel::kSignal || (decoy_qber_abort && is_decoy(tally.cls.label));
    if (abort_applies && tally.detected_sifted > 0 &&
        tally.observed_qber() > qber_abort_threshold) {
      verdict.qber_abort = true;
      verdict.flagged = true;
      score.note = "QBER above abort threshold";
    }
    verdict.classes.push_back(std::move(score));
  }
  return verdict;
}

namespace {

struct ChainInputs {
  double q_mu, e_mu;      // signal statistics for the error-correction charge
  double q_mu_bound;      // signal gain fed to the Y1 bound
  double q_nu_bound;      // weak-decoy gain fed to the Y1 bound
  double error_gain_nu;   // weak-decoy E*Q fed to the e1 bound
  double y0_for_y1;
  double y0_for_e1;
};

DecoyEstimate evaluate_chain(double mu, double nu, bool weak_usable, const ChainInputs& in,
                             const BinomialCi& y0, double q, double f_ec) {
  DecoyEstimate est;
  est.y0 = y0;
  if (weak_usable) {
    const SinglePhotonBound y1 = estimate_y1_lower(mu, in.q_mu_bound, nu, in.q_nu_bound, in.y0_for_y1);
    est.y1_lower = y1.y1_lower;
    est.q1_lower = y1.q1_lower;
    if (y1.clamped) est.clamps.push_back("y1_lower_clamped");
    const SinglePhotonErrorBound e1 =
        e1_upper_from_error_gain(nu, in.error_gain_nu, in.y0_for_e1, y1.y1_lower,
                                 kErroneousDarkFraction);
    est.e1_upper = e1.e1_upper;
    if (e1.clamped) est.clamps.push_back("e1_upper_clamped");
  } else {
    est.y1_lower = 0.0;
    est.q1_lower = 0.0;
    est.e1_upper = 0.5;
    est.clamps.push_back("no_weak_decoy");
  }
  est.r_decoy = gllp_key_rate(q, f_ec, in.q_mu, in.e_mu, est.q1_lower, est.e1_upper);
  est.r_baseline = baseline_key_rate(q, f_ec, in.q_mu, in.e_mu, mu);
  return est;
}

}  // namespace

SessionAnalysis analyze_session(const ObservedStatistics& observed,
                                const ChannelDetector& reference, const AnalysisParams& params) {
  SessionAnalysis analysis;
  analysis.sifting_factor = params.sifting_factor;
  analysis.f_ec = params.f_ec;
  analysis.anomaly = detect_anomaly(observed, reference, params.z_threshold,
                                    params.qber_abort_threshold, params.decoy_qber_abort);

  const ClassTally* signal = observed.find(ClassLabel::kSignal);
  const ClassTally* vacuum = observed.find(ClassLabel::kVacuumDecoy);
  const ClassTally* weak = observed.find(ClassLabel::kWeakDecoy);

  BinomialCi y0;  // conservative envelope [0, 1] unless vacuum data exists
  bool y0_fallback = true;
  if (vacuum != nullptr && vacuum->sifted > 0) {
    y0 = estimate_y0(*vacuum, params.confidence);
    y0_fallback = false;
  }

  if (signal == nullptr || signal->sifted == 0) {
    // Nothing to key against; keep the anomaly verdict and report zero rates.
    analysis.plug_in.y0 = y0;
    analysis.plug_in.clamps.push_back("no_signal_statistics");
    analysis.conservative = analysis.plug_in;
    analysis.optimistic = analysis.plug_in;
    return analysis;
  }

  const double mu = signal->cls.mean_photon_number;
  const double nu = weak != nullptr ? weak->cls.mean_photon_number : 0.0;
  const bool weak_usable = weak != nullptr && weak->sifted > 0 && nu > 0.0 && nu < mu;
  const double q_mu = signal->observed_gain();
  const double e_mu = signal->observed_qber();

  ChainInputs point{q_mu, e_mu, q_mu,
                    weak_usable ? weak->observed_gain() : 0.0,
                    weak_usable ? weak->observed_error_gain() : 0.0,
                    y0.point, y0.point};
  analysis.plug_in = evaluate_chain(mu, nu, weak_usable, point, y0, params.sifting_factor,
                                    params.f_ec);

  ChainInputs cons = point;
  ChainInputs opti = point;
  cons.q_mu_bound = clopper_pearson_upper(signal->detected_sifted, signal->sifted, params.confidence);
  opti.q_mu_bound = clopper_pearson_lower(signal->detected_sifted, signal->sifted, params.confidence);
  if (weak_usable) {
    cons.q_nu_bound = clopper_pearson_lower(weak->detected_sifted, weak->sifted, params.confidence);
    opti.q_nu_bound = clopper_pearson_upper(weak->detected_sifted, weak->sifted, params.confidence);
    cons.error_gain_nu = clopper_pearson_upper(weak->errors_sifted, weak->sifted, params.confidence);
    opti.error_gain_nu = clopper_pearson_lower(weak->errors_sifted, weak->sifted, params.confidence);
  }
  cons.y0_for_y1 = y0.hi;
  cons.y0_for_e1 = y0.lo;
  opti.y0_for_y1 = y0.lo;
  opti.y0_for_e1 = y0.hi;
  analysis.conservative =
      evaluate_chain(mu, nu, weak_usable, cons, y0, params.sifting_factor, params.f_ec);
  analysis.optimistic =
      evaluate_chain(mu, nu, weak_usable, opti, y0, params.sifting_factor, params.f_ec);

  if (y0_fallback) {
    analysis.plug_in.clamps.insert(analysis.plug_in.clamps.begin(), "y0_fallback_envelope");
    analysis.conservative.clamps.insert(analysis.conservative.clamps.begin(),
                                        "y0_fallback_envelope");
    analysis.optimistic.clamps.insert(analysis.optimistic.clamps.begin(), "y0_fallback_envelope");
  }
  return analysis;
}

}  // namespace decoyqkd
