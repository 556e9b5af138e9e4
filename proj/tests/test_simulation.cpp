#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "decoyqkd/models.hpp"
#include "decoyqkd/simulation.hpp"

using namespace decoyqkd;

namespace {

ProtocolConfig default_protocol(std::uint64_t pulses = 1'000'000, std::uint64_t seed = 42) {
  ProtocolConfig config;
  config.schedule = {
      {ClassLabel::kSignal, 0.5, 0.8},
      {ClassLabel::kVacuumDecoy, 0.0, 0.1},
      {ClassLabel::kWeakDecoy, 0.05, 0.1},
  };
  config.pulses_total = pulses;
  config.rng_seed = seed;
  return config;
}

// PNS-modified gain with block=1, override=1: multi-photon pulses always
// arrive (n-1 >= 1 photons over a lossless line), single photons never do.
double pns_gain_series(double mu, double y0, double override_eta) {
  const int order = poisson_truncation_order(mu);
  double gain = poisson_pmf(mu, 0) * y0 + poisson_pmf(mu, 1) * y0;  // blocked: dark only
  for (int n = 2; n <= order; ++n) {
    gain += poisson_pmf(mu, n) * yield_n(y0, override_eta, n - 1);
  }
  return gain;
}

double binomial_sigma(double p, std::uint64_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

PulseRecord make_record(ClassLabel label, std::uint8_t alice_bit, std::uint8_t alice_basis,
                        bool clicked, std::int8_t bob_bit, std::uint8_t bob_basis) {
  PulseRecord record;
  record.label = label;
  record.photons_emitted = 1;
  record.alice_bit = alice_bit;
  record.alice_basis = alice_basis;
  record.eve_action = EveAction::kPass;
  record.photons_arrived = 1;
  record.clicked = clicked;
  record.bob_bit = bob_bit;
  record.bob_basis = bob_basis;
  return record;
}

}  // namespace

TEST_CASE("pns_decision follows the blocking policy") {
  const EveStrategy pns = EveStrategy::pns(1.0, 1.0);
  CHECK(pns_decision(0, pns, 0.99) == EveAction::kPass);
  CHECK(pns_decision(1, pns, 0.99) == EveAction::kBlocked);
  CHECK(pns_decision(3, pns, 0.0) == EveAction::kSplit);

  const EveStrategy partial = EveStrategy::pns(0.3);
  CHECK(pns_decision(1, partial, 0.2) == EveAction::kBlocked);
  CHECK(pns_decision(1, partial, 0.5) == EveAction::kPass);

  const EveStrategy none = EveStrategy::none();
  for (std::uint32_t n : {0u, 1u, 5u}) {
    CHECK(pns_decision(n, none, 0.0) == EveAction::kPass);
  }
}

TEST_CASE("eve strategy validation") {
  CHECK_THROWS_AS(EveStrategy::pns(1.5).validate(), ConfigError);
  CHECK_THROWS_AS(EveStrategy::pns(0.5, 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(EveStrategy::pns(0.5, 1.5).validate(), ConfigError);
  CHECK_NOTHROW(EveStrategy::pns(0.5, 1.0).validate());
}

TEST_CASE("run_session is deterministic for a fixed seed") {
  const ProtocolConfig config = default_protocol(100'000);
  const SessionResult a = run_session(config, EveStrategy::none());
  const SessionResult b = run_session(config, EveStrategy::none());
  CHECK(a.statistics == b.statistics);

  ProtocolConfig reseeded = config;
  reseeded.rng_seed = 43;
  const SessionResult c = run_session(reseeded, EveStrategy::none());
  CHECK(a.statistics != c.statistics);
}

TEST_CASE("sharded execution merges to the identical tallies") {
  const ProtocolConfig config = default_protocol(200'000);
  SessionOptions one;
  one.workers = 1;
  SessionOptions three;
  three.workers = 3;
  SessionOptions eight;
  eight.workers = 8;
  const SessionResult a = run_session(config, EveStrategy::none(), one);
  const SessionResult b = run_session(config, EveStrategy::none(), three);
  const SessionResult c = run_session(config, EveStrategy::none(), eight);
  CHECK(a.statistics == b.statistics);
  CHECK(a.statistics == c.statistics);

  const EveStrategy pns = EveStrategy::pns(1.0, 1.0);
  const SessionResult d = run_session(config, pns, one);
  const SessionResult e = run_session(config, pns, eight);
  CHECK(d.statistics == e.statistics);
}

TEST_CASE("resolve_worker_count precedence: explicit, env, auto") {
  CHECK(resolve_worker_count(5) == 5);
  setenv("DECOYQKD_WORKERS", "7", 1);
  CHECK(resolve_worker_count(0) == 7);
  CHECK(resolve_worker_count(2) == 2);  // explicit wins over env
  unsetenv("DECOYQKD_WORKERS");
  CHECK(resolve_worker_count(0) >= 1);
}

TEST_CASE("all-vacuum schedule with no dark counts never detects") {
  ProtocolConfig config;
  config.schedule = {{ClassLabel::kVacuumDecoy, 0.0, 1.0}};
  config.pulses_total = 50'000;
  config.channel.dark_count_prob = 0.0;
  config.rng_seed = 7;
  for (const EveStrategy& eve : {EveStrategy::none(), EveStrategy::pns(1.0, 1.0)}) {
    const SessionResult result = run_session(config, eve);
    for (const ClassTally& tally : result.statistics.classes) {
      CHECK(tally.detected_sifted == 0);
      CHECK(tally.errors_sifted == 0);
      CHECK(tally.sifted > 0);  // sifting still happens; only detection is dead
    }
  }
}

TEST_CASE("run_session rejects invalid configs but accepts degenerate schedules") {
  ProtocolConfig config = default_protocol(100);
  config.pulses_total = 0;
  CHECK_THROWS_AS(run_session(config, EveStrategy::none()), ConfigError);

  ProtocolConfig no_signal;
  no_signal.schedule = {{ClassLabel::kVacuumDecoy, 0.0, 1.0}};
  no_signal.pulses_total = 100;
  CHECK_NOTHROW(run_session(no_signal, EveStrategy::none()));
}

TEST_CASE("trace retention is guarded by the memory cap") {
  ProtocolConfig config = default_protocol(kMaxTracePulses + 1);
  SessionOptions options;
  options.keep_trace = true;
  CHECK_THROWS_AS(run_session(config, EveStrategy::none(), options), std::invalid_argument);
}

TEST_CASE("Monte Carlo tallies match closed forms within 5 sigma (eve = none)") {
  const ProtocolConfig config = default_protocol();
  const SessionResult result = run_session(config, EveStrategy::none());
  for (const ClassTally& tally : result.statistics.classes) {
    REQUIRE(tally.sifted > 0);
    const GainQber predicted = expected_gain_qber(tally.cls.mean_photon_number, config.channel);
    const double q_sigma = binomial_sigma(predicted.gain, tally.sifted);
    CHECK(std::abs(tally.observed_gain() - predicted.gain) <= 5.0 * q_sigma);
    const double eq_sigma = std::sqrt(predicted.error_gain / static_cast<double>(tally.sifted));
    CHECK(std::abs(tally.observed_error_gain() - predicted.error_gain) <= 5.0 * eq_sigma);
    // Sifting keeps ~q of the sent pulses.
    const double sift_fraction =
        static_cast<double>(tally.sifted) / static_cast<double>(tally.sent);
    CHECK(std::abs(sift_fraction - config.basis_match_prob) <=
          5.0 * binomial_sigma(config.basis_match_prob, tally.sent));
  }
}

TEST_CASE("PNS attack shifts gains to the series oracle (block=1, override=1)") {
  const ProtocolConfig config = default_protocol();
  const SessionResult result = run_session(config, EveStrategy::pns(1.0, 1.0));
  const double y0 = config.channel.dark_count_prob;

  const ClassTally* signal = result.statistics.find(ClassLabel::kSignal);
  REQUIRE(signal != nullptr);
  const double q_signal = pns_gain_series(0.5, y0, 1.0);
  CHECK(q_signal == doctest::Approx(0.090213108390945554).epsilon(1e-12));  // frozen oracle
  CHECK(std::abs(signal->observed_gain() - q_signal) <=
        5.0 * binomial_sigma(q_signal, signal->sifted));

  const ClassTally* weak = result.statistics.find(ClassLabel::kWeakDecoy);
  REQUIRE(weak != nullptr);
  const double q_weak = pns_gain_series(0.05, y0, 1.0);
  CHECK(q_weak == doctest::Approx(0.001219092183207548).epsilon(1e-12));  // frozen oracle
  CHECK(std::abs(weak->observed_gain() - q_weak) <=
        5.0 * binomial_sigma(q_weak, weak->sifted));

  // The vacuum class cannot be attacked: its statistics stay at Y0.
  const ClassTally* vacuum = result.statistics.find(ClassLabel::kVacuumDecoy);
  REQUIRE(vacuum != nullptr);
  CHECK(std::abs(vacuum->observed_gain() - y0) <= 5.0 * binomial_sigma(y0, vacuum->sifted));
}

TEST_CASE("conservation: errors <= detected <= sifted <= sent") {
  for (const EveStrategy& eve : {EveStrategy::none(), EveStrategy::pns(0.7)}) {
    const SessionResult result = run_session(default_protocol(300'000), eve);
    std::uint64_t total = 0;
    for (const ClassTally& tally : result.statistics.classes) {
      CHECK(tally.errors_sifted <= tally.detected_sifted);
      CHECK(tally.detected_sifted <= tally.sifted);
      CHECK(tally.sifted <= tally.sent);
      total += tally.sent;
    }
    CHECK(total == 300'000);
    CHECK(result.statistics.total_sent() == 300'000);
  }
}

TEST_CASE("sift_and_tally handles empty and single-record inputs") {
  const SourceSchedule schedule = default_protocol().schedule;

  const ObservedStatistics empty = sift_and_tally(schedule, {});
  REQUIRE(empty.classes.size() == 3);
  for (const ClassTally& tally : empty.classes) {
    CHECK(tally.sent == 0);
    CHECK(tally.sifted == 0);
    CHECK(tally.detected_sifted == 0);
    CHECK(tally.errors_sifted == 0);
  }

  // Bases match, clicked, bits equal: one clean sifted detection.
  PulseRecord match = make_record(ClassLabel::kSignal, 0, 1, true, 0, 1);
  ObservedStatistics stats = sift_and_tally(schedule, {&match, 1});
  const ClassTally* signal = stats.find(ClassLabel::kSignal);
  REQUIRE(signal != nullptr);
  CHECK(signal->sent == 1);
  CHECK(signal->sifted == 1);
  CHECK(signal->detected_sifted == 1);
  CHECK(signal->errors_sifted == 0);

  // Flipped bit -> an error; mismatched bases -> discarded; no click -> no detection.
  PulseRecord error = make_record(ClassLabel::kSignal, 0, 1, true, 1, 1);
  stats = sift_and_tally(schedule, {&error, 1});
  CHECK(stats.find(ClassLabel::kSignal)->errors_sifted == 1);

  PulseRecord mismatch = make_record(ClassLabel::kSignal, 0, 0, true, 0, 1);
  stats = sift_and_tally(schedule, {&mismatch, 1});
  CHECK(stats.find(ClassLabel::kSignal)->sent == 1);
  CHECK(stats.find(ClassLabel::kSignal)->sifted == 0);

  PulseRecord no_click = make_record(ClassLabel::kWeakDecoy, 1, 0, false, -1, 0);
  stats = sift_and_tally(schedule, {&no_click, 1});
  CHECK(stats.find(ClassLabel::kWeakDecoy)->sifted == 1);
  CHECK(stats.find(ClassLabel::kWeakDecoy)->detected_sifted == 0);

  // A record whose class is missing from the schedule is a caller bug.
  const SourceSchedule vacuum_only = {{ClassLabel::kVacuumDecoy, 0.0, 1.0}};
  CHECK_THROWS_AS(sift_and_tally(vacuum_only, {&match, 1}), std::invalid_argument);
}

TEST_CASE("sift_and_tally over the trace reproduces the session tallies") {
  ProtocolConfig config = default_protocol(50'000);
  SessionOptions options;
  options.keep_trace = true;
  for (const EveStrategy& eve : {EveStrategy::none(), EveStrategy::pns(1.0, 1.0)}) {
    const SessionResult result = run_session(config, eve, options);
    REQUIRE(result.trace.has_value());
    REQUIRE(result.trace->size() == 50'000);
    const ObservedStatistics recounted = sift_and_tally(config.schedule, *result.trace);
    CHECK(recounted == result.statistics);
  }
}

TEST_CASE("trace records respect the PNS arithmetic") {
  ProtocolConfig config = default_protocol(50'000);
  SessionOptions options;
  options.keep_trace = true;
  const SessionResult result = run_session(config, EveStrategy::pns(1.0, 1.0), options);
  for (const PulseRecord& record : *result.trace) {
    CHECK(record.photons_arrived <= record.photons_emitted);
    switch (record.eve_action) {
      case EveAction::kBlocked:
        CHECK(record.photons_emitted == 1);
        CHECK(record.photons_arrived == 0);
        break;
      case EveAction::kSplit:
        CHECK(record.photons_emitted >= 2);
        CHECK(record.photons_arrived == record.photons_emitted - 1);
        break;
      case EveAction::kPass:
        break;
    }
    if (!record.clicked) CHECK(record.bob_bit == -1);
  }
}

TEST_CASE("write_trace_csv emits the documented schema") {
  PulseRecord first = make_record(ClassLabel::kSignal, 1, 0, true, 0, 0);
  first.index = 0;
  first.photons_emitted = 2;
  first.eve_action = EveAction::kSplit;
  first.photons_arrived = 1;
  PulseRecord second = make_record(ClassLabel::kVacuumDecoy, 0, 1, false, -1, 1);
  second.index = 1;
  second.photons_emitted = 0;
  second.photons_arrived = 0;

  const PulseRecord records[] = {first, second};
  std::ostringstream out;
  write_trace_csv(records, out);
  CHECK(out.str() ==
        "index,class,n_emitted,alice_bit,alice_basis,eve_action,n_arrived,clicked,bob_bit,"
        "bob_basis\n"
        "0,signal,2,1,0,split,1,1,0,0\n"
        "1,vacuum_decoy,0,0,1,pass,0,0,,1\n");
}
