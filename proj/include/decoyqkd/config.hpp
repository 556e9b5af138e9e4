#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decoyqkd/decoy_analysis.hpp"
#include "decoyqkd/simulation.hpp"
#include "decoyqkd/types.hpp"

namespace decoyqkd {

// Distance sweep over [start_km, end_km] in steps of step_km (inclusive of the
// end point when it lands on the grid within floating-point slack).
struct SweepRange {
  double start_km = 0.0;
  double end_km = 0.0;
  double step_km = 1.0;

  void validate() const;  // throws ConfigError
  std::vector<double> distances() const;
};

struct OutputSpec {
  std::string directory = "out";
  bool csv = true;
  bool json = false;
};

// A fully resolved experiment: protocol + adversary + optional sweep +
// analysis knobs + output destinations. Produced by load_config / parse_config_text
// with defaults applied, or assembled directly in code.
struct ExperimentSpec {
  ProtocolConfig protocol;
  EveStrategy eve = EveStrategy::none();
  std::optional<SweepRange> sweep;
  AnalysisParams analysis;
  OutputSpec output;
};

// The baseline ExperimentSpec: signal mu=0.5 (p=0.8),
// vacuum decoy (p=0.1), weak decoy nu=0.05 (p=0.1), 50 km fiber at
// 0.2 dB/km, detector efficiency 0.1, Y0=1e-5, e_d=0.01, 1e6 pulses, seed 42.
ExperimentSpec default_spec();

// Parses the flat key=value config grammar:
//   - one `key = value` pair per line; keys are dotted, case-sensitive;
//   - `#` starts a comment (to end of line); blank lines ignored;
//   - duplicate keys are an error; unknown keys are an error listing them.
// `origin` labels error messages (a file path or "<string>").
// Throws ConfigError with line context on any parse or validation failure.
ExperimentSpec parse_config_text(std::string_view text, std::string_view origin = "<config>");

// Reads and parses a config file. Missing/unreadable file -> ConfigError.
ExperimentSpec load_config(const std::filesystem::path& path);

// Re-checks every invariant on an assembled spec (schedule, channel, eve,
// sweep, analysis ranges, output formats). Throws ConfigError.
void validate_spec(const ExperimentSpec& spec);

// Parses a comma-separated format list ("csv", "json", "csv,json") into the
// output flags. Throws ConfigError for anything else.
void set_formats(OutputSpec& output, std::string_view formats_list);

}  // namespace decoyqkd
