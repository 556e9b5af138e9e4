#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "decoyqkd/config.hpp"
#include "decoyqkd/experiment.hpp"
#include "decoyqkd/rng.hpp"
#include "decoyqkd/simulation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;
constexpr int kExitIoError = 4;

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> pulses;
  std::optional<std::string> out_dir;
  std::optional<std::string> formats;
  std::optional<std::string> eve;
  std::optional<double> block_prob;
  std::string trace_path;  // `run` only
};

void add_common_options(CLI::App& cmd, CliOptions& options) {
  cmd.add_option("--config", options.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd.add_option("--seed", options.seed, "override protocol.seed");
  cmd.add_option("--pulses", options.pulses, "override protocol.pulses");
  cmd.add_option("--out", options.out_dir, "override output.directory");
  cmd.add_option("--format", options.formats, "override output.formats (csv, json, csv,json)");
  cmd.add_option("--eve", options.eve, "override eve.strategy (none|pns)")
      ->check(CLI::IsMember({"none", "pns"}));
  cmd.add_option("--block-prob", options.block_prob,
                 "override eve.single_block_prob (PNS single-photon block probability)")
      ->check(CLI::Range(0.0, 1.0));
}

decoyqkd::ExperimentSpec load_with_overrides(const CliOptions& options) {
  decoyqkd::ExperimentSpec spec = decoyqkd::load_config(options.config_path);
  if (options.seed) spec.protocol.rng_seed = *options.seed;
  if (options.pulses) spec.protocol.pulses_total = *options.pulses;
  if (options.out_dir) spec.output.directory = *options.out_dir;
  if (options.formats) decoyqkd::set_formats(spec.output, *options.formats);
  if (options.eve) {
    spec.eve.kind = *options.eve == "pns" ? decoyqkd::EveStrategy::Kind::kPns
                                          : decoyqkd::EveStrategy::Kind::kNone;
  }
  if (options.block_prob) spec.eve.single_block_prob = *options.block_prob;
  decoyqkd::validate_spec(spec);
  return spec;
}

void report_point_failures(const decoyqkd::ExperimentResult& result) {
  for (const decoyqkd::PointFailure& failure : result.failures) {
    std::fprintf(stderr, "warning: point %zu (%.6g km) failed: %s\n", failure.point_index,
                 failure.distance_km, failure.message.c_str());
  }
}

int require_rows(const decoyqkd::ExperimentResult& result) {
  if (result.rows.empty()) {
    std::fprintf(stderr, "error: every sweep point failed; no report written\n");
    return kExitRuntimeError;
  }
  return kExitOk;
}

void print_paths(const decoyqkd::ReportPaths& paths) {
  if (paths.csv) std::printf("wrote %s\n", paths.csv->string().c_str());
  if (paths.json) std::printf("wrote %s\n", paths.json->string().c_str());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw decoyqkd::IoError("cannot write file: " + path.string());
  out << content;
  out.flush();
  if (!out) throw decoyqkd::IoError("cannot write file: " + path.string());
}

int run_single(const CliOptions& options) {
  decoyqkd::ExperimentSpec spec = load_with_overrides(options);
  spec.sweep.reset();  // `run` evaluates the single configured point
  if (!options.trace_path.empty() && spec.protocol.pulses_total > decoyqkd::kMaxTracePulses) {
    throw decoyqkd::ConfigError("--trace requires protocol.pulses <= " +
                                std::to_string(decoyqkd::kMaxTracePulses));
  }
  decoyqkd::ExperimentResult result = decoyqkd::run_experiment(spec);
  report_point_failures(result);
  if (int code = require_rows(result); code != kExitOk) return code;
  decoyqkd::ReportPaths paths =
      decoyqkd::emit_report(result.rows, result.failures, spec, "run");
  print_paths(paths);

  const decoyqkd::ExperimentRow& row = result.rows.front();
  std::printf("distance %.6g km  eta %.6g  Q_mu %.6g  E_mu %.6g\n", row.distance_km, row.eta,
              row.q_mu, row.e_mu);
  std::printf("R_decoy %.6g  R_baseline %.6g  verdict %s\n", row.r_decoy, row.r_baseline,
              row.verdict.c_str());

  if (!options.trace_path.empty()) {
    // Re-run the same substream with trace retention; determinism makes this
    // the identical session that produced the report row.
    decoyqkd::ProtocolConfig protocol = spec.protocol;
    protocol.rng_seed = decoyqkd::point_seed(spec.protocol.rng_seed, protocol.channel.distance_km);
    decoyqkd::SessionOptions session_options;
    session_options.keep_trace = true;
    decoyqkd::SessionResult session =
        decoyqkd::run_session(protocol, spec.eve, session_options);
    std::ofstream trace_out(options.trace_path, std::ios::binary | std::ios::trunc);
    if (!trace_out) throw decoyqkd::IoError("cannot write file: " + options.trace_path);
    decoyqkd::write_trace_csv(*session.trace, trace_out);
    trace_out.flush();
    if (!trace_out) throw decoyqkd::IoError("cannot write file: " + options.trace_path);
    std::printf("wrote %s\n", options.trace_path.c_str());
  }
  return kExitOk;
}

int run_sweep(const CliOptions& options) {
  decoyqkd::ExperimentSpec spec = load_with_overrides(options);
  if (!spec.sweep) {
    throw decoyqkd::ConfigError("sweep subcommand requires sweep.start_km/sweep.end_km in the "
                                "config");
  }
  decoyqkd::ExperimentResult result = decoyqkd::run_experiment(spec);
  report_point_failures(result);
  if (int code = require_rows(result); code != kExitOk) return code;
  decoyqkd::ReportPaths paths =
      decoyqkd::emit_report(result.rows, result.failures, spec, "sweep");
  print_paths(paths);
  std::printf("%zu points, %zu failed\n", result.rows.size() + result.failures.size(),
              result.failures.size());
  return kExitOk;
}

int run_compare(const CliOptions& options) {
  decoyqkd::ExperimentSpec attacked = load_with_overrides(options);
  // The comparison pits the configured protocol against the same protocol
  // under PNS. If the config does not already describe an attack, use the
  // strongest one: block every single-photon pulse and forward the rest
  // losslessly.
  if (attacked.eve.kind != decoyqkd::EveStrategy::Kind::kPns) {
    attacked.eve = decoyqkd::EveStrategy::pns(
        options.block_prob ? *options.block_prob : 1.0, 1.0);
  }
  decoyqkd::ExperimentSpec baseline = attacked;
  baseline.eve = decoyqkd::EveStrategy::none();

  decoyqkd::ExperimentResult none_result = decoyqkd::run_experiment(baseline);
  decoyqkd::ExperimentResult pns_result = decoyqkd::run_experiment(attacked);
  report_point_failures(none_result);
  report_point_failures(pns_result);
  if (int code = require_rows(none_result); code != kExitOk) return code;
  if (int code = require_rows(pns_result); code != kExitOk) return code;

  decoyqkd::ReportPaths none_paths =
      decoyqkd::emit_report(none_result.rows, none_result.failures, baseline, "compare_none");
  decoyqkd::ReportPaths pns_paths =
      decoyqkd::emit_report(pns_result.rows, pns_result.failures, attacked, "compare_pns");
  print_paths(none_paths);
  print_paths(pns_paths);

  const std::string summary =
      decoyqkd::render_compare_summary(none_result.rows, pns_result.rows);
  const std::filesystem::path summary_path =
      std::filesystem::path(attacked.output.directory) / "compare_delta.csv";
  write_text_file(summary_path, summary);
  std::printf("wrote %s\n", summary_path.string().c_str());
  std::fputs(summary.c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decoy-state BB84 QKD simulator and key-rate analyzer"};
  app.require_subcommand(1);

  CliOptions options;
  CLI::App* run_cmd = app.add_subcommand("run", "simulate the single configured point");
  add_common_options(*run_cmd, options);
  run_cmd->add_option("--trace", options.trace_path,
                      "write a per-pulse trace CSV (requires pulses <= 100000)");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "simulate every distance in the sweep range");
  add_common_options(*sweep_cmd, options);

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run eve=none vs eve=pns and summarize the delta");
  add_common_options(*compare_cmd, options);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    const int code = app.exit(error);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run_cmd->parsed()) return run_single(options);
    if (sweep_cmd->parsed()) return run_sweep(options);
    return run_compare(options);
  } catch (const decoyqkd::ConfigError& error) {
    std::fprintf(stderr, "config error: %s\n", error.what());
    return kExitConfigError;
  } catch (const decoyqkd::IoError& error) {
    std::fprintf(stderr, "i/o error: %s\n", error.what());
    return kExitIoError;
  } catch (const std::exception& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return kExitRuntimeError;
  }
}
