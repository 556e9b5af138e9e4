#pragma once

#include "decoyqkd/types.hpp"

namespace decoyqkd {

/// P(n photons) for a phase-randomized coherent pulse of mean `mu`.
/// Evaluated in log space so large n (Hwang-style decoys) cannot overflow.
/// mu = 0 degenerates to a point mass at n = 0.
/// Throws std::domain_error for mu < 0 or n < 0.
double poisson_pmf(double mu, int n);

/// Truncation order after which the Poisson tail mass is below ~1e-12:
/// ceil(mu + 10*sqrt(mu) + 20), never less than 20.
int poisson_truncation_order(double mu);

/// Overall channel-plus-detector transmittance eta in (0, 1].
double transmittance(const ChannelDetector& cd);

/// Yield of an n-photon pulse under a threshold detector with independent
/// dark counts: Y_n = 1 - (1 - y0) * (1 - eta)^n. Strictly increasing in n
/// for 0 < eta < 1; Y_0 = y0.
/// Throws std::domain_error outside [0, 1] domains.
double yield_n(double y0, double eta, int n);

struct GainQber {
  double gain;        // Q: unconditional detection probability
  double qber;        // E: error rate among detected pulses
  double error_gain;  // E*Q, the closed-form product (== gain*qber up to rounding)
};

/// Closed-form prediction of what sifting measures for intensity mu:
///   Q   = 1 - (1 - Y0) * exp(-eta*mu)
///   E*Q = e0*Y0 + e_d*(1 - exp(-eta*mu))
/// E is defined as e0 when Q = 0 (possible only for Y0 = 0, eta*mu = 0).
/// Throws std::domain_error for mu < 0.
GainQber expected_gain_qber(double mu, const ChannelDetector& cd);

}  // namespace decoyqkd
