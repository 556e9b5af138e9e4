#include "decoyqkd/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>

#include "decoyqkd/models.hpp"
#include "decoyqkd/rng.hpp"

namespace decoyqkd {

std::string_view to_string(EveAction action) {
  switch (action) {
    case EveAction::kPass:
      return "pass";
    case EveAction::kBlocked:
      return "blocked";
    case EveAction::kSplit:
      return "split";
  }
  return "unknown";
}

void EveStrategy::validate() const {
  if (!(single_block_prob >= 0.0 && single_block_prob <= 1.0)) {
    throw ConfigError("eve.single_block_prob must lie in [0, 1]");
  }
  if (forward_transmittance_override &&
      !(*forward_transmittance_override > 0.0 && *forward_transmittance_override <= 1.0)) {
    throw ConfigError("eve.forward_transmittance must lie in (0, 1]");
  }
}

void ProtocolConfig::validate(bool require_signal) const {
  validate_schedule(schedule, require_signal);
  channel.validate();
  if (pulses_total < 1) {
    throw ConfigError("protocol.pulses_total must be >= 1");
  }
  if (!(basis_match_prob > 0.0 && basis_match_prob <= 1.0)) {
    throw ConfigError("protocol.basis_match_prob must lie in (0, 1]");
  }
  if (!(qber_abort_threshold >= 0.0 && qber_abort_threshold <= 1.0)) {
    throw ConfigError("protocol.qber_abort_threshold must lie in [0, 1]");
  }
}

const ClassTally* ObservedStatistics::find(ClassLabel label) const {
  for (const ClassTally& tally : classes) {
    if (tally.cls.label == label) return &tally;
  }
  return nullptr;
}

ClassTally* ObservedStatistics::find(ClassLabel label) {
  for (ClassTally& tally : classes) {
    if (tally.cls.label == label) return &tally;
  }
  return nullptr;
}

std::uint64_t ObservedStatistics::total_sent() const {
  std::uint64_t total = 0;
  for (const ClassTally& tally : classes) total += tally.sent;
  return total;
}

void ObservedStatistics::merge(const ObservedStatistics& other) {
  if (classes.size() != other.classes.size()) {
    throw std::invalid_argument("merge: mismatched schedules");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].cls.label != other.classes[i].cls.label) {
      throw std::invalid_argument("merge: mismatched schedules");
    }
    classes[i].sent += other.classes[i].sent;
    classes[i].sifted += other.classes[i].sifted;
    classes[i].detected_sifted += other.classes[i].detected_sifted;
    classes[i].errors_sifted += other.classes[i].errors_sifted;
  }
}

EveAction pns_decision(std::uint32_t photon_number, const EveStrategy& eve, double rng_draw) {
  if (eve.kind == EveStrategy::Kind::kNone || photon_number == 0) {
    return EveAction::kPass;
  }
  if (photon_number == 1) {
    return rng_draw < eve.single_block_prob ? EveAction::kBlocked : EveAction::kPass;
  }
  return EveAction::kSplit;
}

int resolve_worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DECOYQKD_WORKERS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed > 0) return static_cast<int>(std::min<long>(parsed, 1024));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Inversion sampling; exact for the intensities this simulator targets and
// capped at the same truncation order the analytic series uses.
std::uint32_t sample_poisson(double mu, PulseRng& rng) {
  if (mu <= 0.0) {
    rng.next_u64();  // keep the per-pulse draw layout fixed
    return 0;
  }
  const double u = rng.next_unit();
  const auto cap = static_cast<std::uint32_t>(poisson_truncation_order(mu));
  double term = std::exp(-mu);
  double cumulative = term;
  std::uint32_t n = 0;
  while (u >= cumulative && n < cap) {
    ++n;
    term *= mu / n;
    cumulative += term;
  }
  return n;
}

struct SessionContext {
  const ProtocolConfig* config;
  const EveStrategy* eve;
  std::vector<double> class_cumprob;  // cumulative send probabilities, schedule order
  double eta;
  std::uint64_t seed;
};

// Simulates pulse `index` and folds it into `tally`; fills `record` if given.
void simulate_pulse(const SessionContext& ctx, std::uint64_t index,
                    std::vector<ClassTally>& tallies, PulseRecord* record) {
  const ChannelDetector& channel = ctx.config->channel;
  PulseRng rng = pulse_stream(ctx.seed, index);

  // Draw 1: intensity class.
  const double u_class = rng.next_unit();
  std::size_t class_index = 0;
  while (class_index + 1 < ctx.class_cumprob.size() && u_class >= ctx.class_cumprob[class_index]) {
    ++class_index;
  }
  ClassTally& tally = tallies[class_index];

  // Draw 2: photon number. Draws 3-4: Alice's bit and basis.
  const std::uint32_t emitted = sample_poisson(tally.cls.mean_photon_number, rng);
  const std::uint8_t alice_bit = rng.next_bit();
  const std::uint8_t alice_basis = rng.next_bit();

  // Draw 5: Eve.
  const EveAction action = pns_decision(emitted, *ctx.eve, rng.next_unit());
  std::uint32_t arrived = emitted;
  double detect_prob = ctx.eta;
  if (action == EveAction::kBlocked) {
    arrived = 0;
  } else if (action == EveAction::kSplit) {
    arrived = emitted - 1;
    if (ctx.eve->forward_transmittance_override) {
      detect_prob = *ctx.eve->forward_transmittance_override;
    }
  }

  // One draw per arriving photon, then dark count, Bob basis, bit draw.
  bool photon_click = false;
  for (std::uint32_t photon = 0; photon < arrived; ++photon) {
    photon_click |= rng.next_unit() < detect_prob;
  }
  const bool dark_click = rng.next_unit() < channel.dark_count_prob;
  const bool clicked = photon_click || dark_click;
  const std::uint8_t bob_basis = rng.next_unit() < ctx.config->basis_match_prob
                                     ? alice_basis
                                     : static_cast<std::uint8_t>(1 - alice_basis);
  const double u_bit = rng.next_unit();

  std::int8_t bob_bit = -1;
  if (clicked) {
    // Photon-only clicks err with e_d; dark involvement randomizes the bit.
    const double flip_prob =
        (photon_click && !dark_click) ? channel.misalignment_error : channel.erroneous_dark_fraction;
    bob_bit = static_cast<std::int8_t>(u_bit < flip_prob ? 1 - alice_bit : alice_bit);
  }

  ++tally.sent;
  if (bob_basis == alice_basis) {
    ++tally.sifted;
    if (clicked) {
      ++tally.detected_sifted;
      if (bob_bit != static_cast<std::int8_t>(alice_bit)) ++tally.errors_sifted;
    }
  }

  if (record != nullptr) {
    *record = PulseRecord{index,  tally.cls.label, emitted, alice_bit, alice_basis,
                          action, arrived,         clicked, bob_bit,   bob_basis};
  }
}

ObservedStatistics zero_statistics(const SourceSchedule& schedule) {
  ObservedStatistics stats;
  stats.classes.reserve(schedule.size());
  for (const IntensityClass& cls : schedule) {
    stats.classes.push_back(ClassTally{cls, 0, 0, 0, 0});
  }
  return stats;
}

}  // namespace

SessionResult run_session(const ProtocolConfig& config, const EveStrategy& eve,
                          const SessionOptions& options) {
  config.validate(false);
  eve.validate();
  if (options.keep_trace && config.pulses_total > kMaxTracePulses) {
    throw std::invalid_argument("trace retention requires pulses_total <= " +
                                std::to_string(kMaxTracePulses));
  }

  SessionContext ctx;
  ctx.config = &config;
  ctx.eve = &eve;
  ctx.eta = transmittance(config.channel);
  ctx.seed = config.rng_seed;
  double cumulative = 0.0;
  for (const IntensityClass& cls : config.schedule) {
    cumulative += cls.send_probability;
    ctx.class_cumprob.push_back(cumulative);
  }

  SessionResult result;
  result.statistics = zero_statistics(config.schedule);
  if (options.keep_trace) {
    result.trace.emplace(config.pulses_total);
  }
  PulseRecord* records = options.keep_trace ? result.trace->data() : nullptr;

  const std::uint64_t total = config.pulses_total;
  const int workers = std::max(1, std::min<int>(resolve_worker_count(options.workers),
                                                static_cast<int>(std::min<std::uint64_t>(
                                                    total, 1024))));
  if (workers == 1) {
    for (std::uint64_t i = 0; i < total; ++i) {
      simulate_pulse(ctx, i, result.statistics.classes, records ? records + i : nullptr);
    }
    return result;
  }

  // Contiguous blocks with private tallies; per-pulse streams make the merge
  // independent of the block layout.
  std::vector<ObservedStatistics> partials(static_cast<std::size_t>(workers),
                                           zero_statistics(config.schedule));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  const std::uint64_t block = (total + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::uint64_t begin = block * static_cast<std::uint64_t>(w);
    const std::uint64_t end = std::min(total, begin + block);
    threads.emplace_back([&, w, begin, end] {
      for (std::uint64_t i = begin; i < end; ++i) {
        simulate_pulse(ctx, i, partials[static_cast<std::size_t>(w)].classes,
                       records ? records + i : nullptr);
      }
    });
  }
  for (std::thread& thread : threads) thread.join();
  for (const ObservedStatistics& partial : partials) result.statistics.merge(partial);
  return result;
}

ObservedStatistics sift_and_tally(const SourceSchedule& schedule,
                                  std::span<const PulseRecord> records) {
  ObservedStatistics stats = zero_statistics(schedule);
  for (const PulseRecord& record : records) {
    ClassTally* tally = stats.find(record.label);
    if (tally == nullptr) {
      throw std::invalid_argument("sift_and_tally: record class not in schedule");
    }
    ++tally->sent;
    if (record.bob_basis != record.alice_basis) continue;
    ++tally->sifted;
    if (!record.clicked) continue;
    ++tally->detected_sifted;
    if (record.bob_bit != static_cast<std::int8_t>(record.alice_bit)) ++tally->errors_sifted;
  }
  return stats;
}

void write_trace_csv(std::span<const PulseRecord> records, std::ostream& out) {
  out << "index,class,n_emitted,alice_bit,alice_basis,eve_action,n_arrived,clicked,bob_bit,"
         "bob_basis\n";
  for (const PulseRecord& r : records) {
    out << r.index << ',' << to_string(r.label) << ',' << r.photons_emitted << ','
        << int{r.alice_bit} << ',' << int{r.alice_basis} << ',' << to_string(r.eve_action) << ','
        << r.photons_arrived << ',' << (r.clicked ? 1 : 0) << ',';
    if (r.bob_bit >= 0) out << int{r.bob_bit};
    out << ',' << int{r.bob_basis} << '\n';
  }
}

}  // namespace decoyqkd
