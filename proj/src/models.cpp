#include "decoyqkd/models.hpp"

#include <cmath>
#include <string>

namespace decoyqkd {

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::kSignal:
      return "signal";
    case ClassLabel::kVacuumDecoy:
      return "vacuum_decoy";
    case ClassLabel::kWeakDecoy:
      return "weak_decoy";
    case ClassLabel::kHwangDecoy:
      return "hwang_decoy";
  }
  return "unknown";
}

namespace {

void require_probability(double value, const char* field) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ConfigError(std::string(field) + " must lie in [0, 1], got " + std::to_string(value));
  }
}

}  // namespace

void validate_schedule(const SourceSchedule& schedule, bool require_signal) {
  if (schedule.empty()) {
    throw ConfigError("source schedule is empty");
  }
  int counts[4] = {0, 0, 0, 0};
  double probability_sum = 0.0;
  const IntensityClass* signal = nullptr;
  const IntensityClass* weak = nullptr;
  for (const IntensityClass& cls : schedule) {
    const std::string name(to_string(cls.label));
    if (!(cls.mean_photon_number >= 0.0)) {
      throw ConfigError(name + ".mu must be >= 0, got " + std::to_string(cls.mean_photon_number));
    }
    if (cls.label == ClassLabel::kVacuumDecoy && cls.mean_photon_number != 0.0) {
      throw ConfigError("vacuum_decoy.mu must be exactly 0");
    }
    require_probability(cls.send_probability, (name + ".send_probability").c_str());
    probability_sum += cls.send_probability;
    if (++counts[static_cast<int>(cls.label)] > 1) {
      throw ConfigError("duplicate intensity class: " + name);
    }
    if (cls.label == ClassLabel::kSignal) signal = &cls;
    if (cls.label == ClassLabel::kWeakDecoy) weak = &cls;
  }
  if (require_signal && signal == nullptr) {
    throw ConfigError("schedule must contain exactly one signal class");
  }
  if (signal != nullptr && weak != nullptr &&
      !(weak->mean_photon_number < signal->mean_photon_number)) {
    throw ConfigError("weak_decoy.mu must be strictly less than signal.mu");
  }
  if (std::abs(probability_sum - 1.0) > kScheduleProbabilityTolerance) {
    throw ConfigError("send probabilities must sum to 1 within 1e-12, got " +
                      std::to_string(probability_sum));
  }
}

void ChannelDetector::validate() const {
  if (!(distance_km >= 0.0)) {
    throw ConfigError("channel.distance_km must be >= 0");
  }
  if (!(attenuation_db_per_km >= 0.0)) {
    throw ConfigError("channel.attenuation_db_per_km must be >= 0");
  }
  if (!(extra_loss_db >= 0.0)) {
    throw ConfigError("channel.extra_loss_db must be >= 0");
  }
  require_probability(detector_efficiency, "channel.detector_efficiency");
  if (!(dark_count_prob >= 0.0 && dark_count_prob < 1.0)) {
    throw ConfigError("channel.dark_count_prob must lie in [0, 1)");
  }
  if (!(misalignment_error >= 0.0 && misalignment_error <= 0.5)) {
    throw ConfigError("channel.misalignment_error must lie in [0, 0.5]");
  }
  require_probability(erroneous_dark_fraction, "channel.erroneous_dark_fraction");
  const double eta = std::pow(10.0, -(attenuation_db_per_km * distance_km + extra_loss_db) / 10.0) *
                     detector_efficiency;
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw ConfigError("derived transmittance must lie in (0, 1]; check channel.detector_efficiency");
  }
}

double poisson_pmf(double mu, int n) {
  if (!(mu >= 0.0)) {
    throw std::domain_error("poisson_pmf: mu must be >= 0");
  }
  if (n < 0) {
    throw std::domain_error("poisson_pmf: n must be >= 0");
  }
  if (mu == 0.0) {
    return n == 0 ? 1.0 : 0.0;
  }
  return std::exp(-mu + n * std::log(mu) - std::lgamma(n + 1.0));
}

int poisson_truncation_order(double mu) {
  const int order = static_cast<int>(std::ceil(mu + 10.0 * std::sqrt(mu) + 20.0));
  return order < 20 ? 20 : order;
}

double transmittance(const ChannelDetector& cd) {
  cd.validate();
  return std::pow(10.0, -(cd.attenuation_db_per_km * cd.distance_km + cd.extra_loss_db) / 10.0) *
         cd.detector_efficiency;
}

double yield_n(double y0, double eta, int n) {
  if (!(y0 >= 0.0 && y0 <= 1.0)) {
    throw std::domain_error("yield_n: y0 must lie in [0, 1]");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw std::domain_error("yield_n: eta must lie in [0, 1]");
  }
  if (n < 0) {
    throw std::domain_error("yield_n: n must be >= 0");
  }
  // Algebraically 1 - (1-y0)(1-eta)^n, written so Y_0 == y0 exactly.
  return y0 + (1.0 - y0) * (1.0 - std::pow(1.0 - eta, n));
}

GainQber expected_gain_qber(double mu, const ChannelDetector& cd) {
  if (!(mu >= 0.0)) {
    throw std::domain_error("expected_gain_qber: mu must be >= 0");
  }
  const double eta = transmittance(cd);
  const double y0 = cd.dark_count_prob;
  const double photon_click = -std::expm1(-eta * mu);  // 1 - exp(-eta*mu)
  // Algebraically 1 - (1-Y0)e^(-eta*mu), written so Q(mu=0) == Y0 exactly.
  const double gain = y0 + (1.0 - y0) * photon_click;
  const double error_gain = cd.erroneous_dark_fraction * y0 + cd.misalignment_error * photon_click;
  const double qber = gain > 0.0 ? error_gain / gain : cd.erroneous_dark_fraction;
  return GainQber{gain, qber, error_gain};
}

}  // namespace decoyqkd
