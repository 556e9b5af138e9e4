#include "decoyqkd/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace decoyqkd {

void SweepRange::validate() const {
  if (!(step_km > 0.0)) throw ConfigError("sweep.step_km must be > 0");
  if (!(start_km >= 0.0)) throw ConfigError("sweep.start_km must be >= 0");
  if (!(end_km >= start_km)) throw ConfigError("sweep.end_km must be >= sweep.start_km");
}

std::vector<double> SweepRange::distances() const {
  validate();
  // Inclusive grid; the 1e-9 slack keeps end points that land on the grid
  // despite accumulated floating-point error.
  const auto count =
      static_cast<std::size_t>(std::floor((end_km - start_km) / step_km + 1e-9)) + 1;
  std::vector<double> points;
  points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    points.push_back(start_km + static_cast<double>(i) * step_km);
  }
  return points;
}

namespace {

struct RawEntry {
  std::string value;
  int line = 0;
  bool consumed = false;
};

using RawMap = std::map<std::string, RawEntry>;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(std::string_view origin, int line, const std::string& message) {
  std::ostringstream out;
  out << origin << ":" << line << ": " << message;
  throw ConfigError(out.str());
}

RawMap tokenize(std::string_view text, std::string_view origin) {
  RawMap entries;
  int line_number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line =
        eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string_view stripped = trim(line);
    if (!stripped.empty()) {
      const auto eq = stripped.find('=');
      if (eq == std::string_view::npos) {
        fail(origin, line_number, "expected 'key = value', got '" + std::string(stripped) + "'");
      }
      const std::string key{trim(stripped.substr(0, eq))};
      const std::string value{trim(stripped.substr(eq + 1))};
      if (key.empty()) fail(origin, line_number, "empty key");
      if (value.empty()) fail(origin, line_number, "empty value for key '" + key + "'");
      const auto [it, inserted] = entries.emplace(key, RawEntry{value, line_number});
      if (!inserted) {
        fail(origin, line_number,
             "duplicate key '" + key + "' (first set on line " + std::to_string(it->second.line) +
                 ")");
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return entries;
}

class KeyReader {
 public:
  KeyReader(RawMap& entries, std::string_view origin) : entries_(entries), origin_(origin) {}

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  double get_double(const std::string& key, double fallback) {
    const RawEntry* entry = take(key);
    if (entry == nullptr) return fallback;
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(entry->value, &used);
    } catch (const std::exception&) {
      fail(origin_, entry->line, "value for '" + key + "' is not a number: '" + entry->value + "'");
    }
    if (used != entry->value.size() || !std::isfinite(value)) {
      fail(origin_, entry->line, "value for '" + key + "' is not a number: '" + entry->value + "'");
    }
    return value;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const RawEntry* entry = take(key);
    if (entry == nullptr) return fallback;
    if (!entry->value.empty() && entry->value.front() == '-') {
      fail(origin_, entry->line, "value for '" + key + "' must be a non-negative integer");
    }
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
      value = std::stoull(entry->value, &used);
    } catch (const std::exception&) {
      fail(origin_, entry->line,
           "value for '" + key + "' is not an integer: '" + entry->value + "'");
    }
    if (used != entry->value.size()) {
      fail(origin_, entry->line,
           "value for '" + key + "' is not an integer: '" + entry->value + "'");
    }
    return value;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const RawEntry* entry = take(key);
    if (entry == nullptr) return fallback;
    if (entry->value == "true") return true;
    if (entry->value == "false") return false;
    fail(origin_, entry->line, "value for '" + key + "' must be 'true' or 'false'");
  }

  std::string get_string(const std::string& key, std::string fallback) {
    const RawEntry* entry = take(key);
    if (entry == nullptr) return fallback;
    return entry->value;
  }

  const RawEntry* take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.consumed = true;
    return &it->second;
  }

  void reject_unknown() const {
    std::string unknown;
    for (const auto& [key, entry] : entries_) {
      if (entry.consumed) continue;
      if (!unknown.empty()) unknown += ", ";
      unknown += "'" + key + "' (line " + std::to_string(entry.line) + ")";
    }
    if (!unknown.empty()) {
      throw ConfigError(std::string(origin_) + ": unknown keys: " + unknown);
    }
  }

  std::string_view origin() const { return origin_; }

 private:
  RawMap& entries_;
  std::string_view origin_;
};

}  // namespace

ExperimentSpec default_spec() {
  ExperimentSpec spec;
  spec.protocol.schedule = {
      {ClassLabel::kSignal, 0.5, 0.8},
      {ClassLabel::kVacuumDecoy, 0.0, 0.1},
      {ClassLabel::kWeakDecoy, 0.05, 0.1},
  };
  return spec;  // remaining fields carry their struct defaults
}

ExperimentSpec parse_config_text(std::string_view text, std::string_view origin) {
  RawMap entries = tokenize(text, origin);
  KeyReader reader(entries, origin);
  ExperimentSpec spec;

  // Source schedule. When the Hwang decoy (mu ~ 2) is enabled and no send
  // probability is given explicitly, the signal share shrinks to make room.
  const bool hwang_enabled = reader.get_bool("hwang_decoy.enabled", false);
  const bool any_probability_set =
      reader.has("signal.probability") || reader.has("vacuum_decoy.probability") ||
      reader.has("weak_decoy.probability") || reader.has("hwang_decoy.probability");
  const double default_signal_p = hwang_enabled && !any_probability_set ? 0.7 : 0.8;

  SourceSchedule schedule;
  schedule.push_back({ClassLabel::kSignal, reader.get_double("signal.mu", 0.5),
                      reader.get_double("signal.probability", default_signal_p)});
  schedule.push_back({ClassLabel::kVacuumDecoy, reader.get_double("vacuum_decoy.mu", 0.0),
                      reader.get_double("vacuum_decoy.probability", 0.1)});
  schedule.push_back({ClassLabel::kWeakDecoy, reader.get_double("weak_decoy.mu", 0.05),
                      reader.get_double("weak_decoy.probability", 0.1)});
  const double hwang_mu = reader.get_double("hwang_decoy.mu", 2.0);
  const double hwang_p = reader.get_double("hwang_decoy.probability", 0.1);
  if (hwang_enabled) {
    schedule.push_back({ClassLabel::kHwangDecoy, hwang_mu, hwang_p});
  }
  spec.protocol.schedule = std::move(schedule);

  ChannelDetector& ch = spec.protocol.channel;
  ch.distance_km = reader.get_double("channel.distance_km", ch.distance_km);
  ch.attenuation_db_per_km =
      reader.get_double("channel.attenuation_db_per_km", ch.attenuation_db_per_km);
  ch.extra_loss_db = reader.get_double("channel.extra_loss_db", ch.extra_loss_db);
  ch.detector_efficiency =
      reader.get_double("channel.detector_efficiency", ch.detector_efficiency);
  ch.dark_count_prob = reader.get_double("channel.dark_count_prob", ch.dark_count_prob);
  ch.misalignment_error =
      reader.get_double("channel.misalignment_error", ch.misalignment_error);

  spec.protocol.pulses_total = reader.get_u64("protocol.pulses", spec.protocol.pulses_total);
  spec.protocol.rng_seed = reader.get_u64("protocol.seed", spec.protocol.rng_seed);
  spec.protocol.basis_match_prob =
      reader.get_double("protocol.basis_match_prob", spec.protocol.basis_match_prob);
  spec.protocol.qber_abort_threshold =
      reader.get_double("protocol.qber_abort_threshold", spec.protocol.qber_abort_threshold);

  const std::string eve_kind = reader.get_string("eve.strategy", "none");
  if (eve_kind == "none") {
    spec.eve = EveStrategy::none();
  } else if (eve_kind == "pns") {
    spec.eve.kind = EveStrategy::Kind::kPns;
  } else {
    throw ConfigError(std::string(origin) + ": eve.strategy must be 'none' or 'pns', got '" +
                      eve_kind + "'");
  }
  spec.eve.single_block_prob =
      reader.get_double("eve.single_block_prob", spec.eve.single_block_prob);
  if (reader.has("eve.forward_transmittance")) {
    spec.eve.forward_transmittance_override =
        reader.get_double("eve.forward_transmittance", 1.0);
  }

  const bool sweep_requested =
      reader.has("sweep.start_km") || reader.has("sweep.end_km") || reader.has("sweep.step_km");
  if (sweep_requested) {
    if (!reader.has("sweep.start_km") || !reader.has("sweep.end_km")) {
      throw ConfigError(std::string(origin) +
                        ": sweep requires both sweep.start_km and sweep.end_km");
    }
    SweepRange sweep;
    sweep.start_km = reader.get_double("sweep.start_km", 0.0);
    sweep.end_km = reader.get_double("sweep.end_km", 0.0);
    sweep.step_km = reader.get_double("sweep.step_km", 5.0);
    spec.sweep = sweep;
  }

  spec.analysis.confidence = reader.get_double("analysis.confidence", spec.analysis.confidence);
  spec.analysis.z_threshold =
      reader.get_double("analysis.z_threshold", spec.analysis.z_threshold);
  spec.analysis.f_ec = reader.get_double("analysis.f_ec", spec.analysis.f_ec);
  spec.analysis.decoy_qber_abort =
      reader.get_bool("analysis.decoy_qber_abort", spec.analysis.decoy_qber_abort);

  spec.output.directory = reader.get_string("output.directory", spec.output.directory);
  set_formats(spec.output, reader.get_string("output.formats", "csv"));

  reader.reject_unknown();

  // The sifting factor and abort threshold feed both the protocol and the
  // analysis; keep them in lockstep.
  spec.analysis.sifting_factor = spec.protocol.basis_match_prob;
  spec.analysis.qber_abort_threshold = spec.protocol.qber_abort_threshold;

  validate_spec(spec);
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.string());
}

void validate_spec(const ExperimentSpec& spec) {
  spec.protocol.validate(/*require_signal=*/true);
  spec.eve.validate();
  if (spec.sweep) spec.sweep->validate();
  if (!(spec.analysis.confidence > 0.0 && spec.analysis.confidence < 1.0)) {
    throw ConfigError("analysis.confidence must lie in (0, 1)");
  }
  if (!(spec.analysis.z_threshold > 0.0)) {
    throw ConfigError("analysis.z_threshold must be > 0");
  }
  if (!(spec.analysis.f_ec >= 1.0)) {
    throw ConfigError("analysis.f_ec must be >= 1");
  }
  if (!(spec.analysis.sifting_factor > 0.0 && spec.analysis.sifting_factor <= 1.0)) {
    throw ConfigError("protocol.basis_match_prob must lie in (0, 1]");
  }
  if (!(spec.analysis.qber_abort_threshold > 0.0 && spec.analysis.qber_abort_threshold <= 0.5)) {
    throw ConfigError("protocol.qber_abort_threshold must lie in (0, 0.5]");
  }
  if (spec.output.directory.empty()) {
    throw ConfigError("output.directory must be non-empty");
  }
  if (!spec.output.csv && !spec.output.json) {
    throw ConfigError("output.formats must include at least one of 'csv', 'json'");
  }
}

void set_formats(OutputSpec& output, std::string_view formats_list) {
  output.csv = false;
  output.json = false;
  std::size_t start = 0;
  while (start <= formats_list.size()) {
    const auto comma = formats_list.find(',', start);
    const std::string_view token =
        trim(comma == std::string_view::npos ? formats_list.substr(start)
                                             : formats_list.substr(start, comma - start));
    if (token == "csv") {
      output.csv = true;
    } else if (token == "json") {
      output.json = true;
    } else if (!token.empty()) {
      throw ConfigError("output.formats entries must be 'csv' or 'json', got '" +
                        std::string(token) + "'");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (!output.csv && !output.json) {
    throw ConfigError("output.formats must include at least one of 'csv', 'json'");
  }
}

}  // namespace decoyqkd
