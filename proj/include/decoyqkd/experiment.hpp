#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decoyqkd/config.hpp"
#include "decoyqkd/decoy_analysis.hpp"
#include "decoyqkd/simulation.hpp"

namespace decoyqkd {

// One report row: the observed statistics and the plug-in analysis chain for
// a single sweep point. Mirrors the CSV schema exactly.
struct ExperimentRow {
  std::size_t point_index = 0;
  double distance_km = 0.0;
  double eta = 0.0;
  double q_mu = 0.0;
  double e_mu = 0.0;
  double q_nu = 0.0;
  double e_nu = 0.0;
  double y0_hat = 0.0;
  double y0_lo = 0.0;
  double y0_hi = 1.0;
  double y1_lower = 0.0;
  double q1_lower = 0.0;
  double e1_upper = 0.5;
  double r_decoy = 0.0;
  double r_baseline = 0.0;
  std::string verdict;  // "clean" | "flagged"
  std::string clamps;   // ';'-joined clamp notes, or "none"
};

struct PointFailure {
  std::size_t point_index = 0;
  double distance_km = 0.0;
  std::string message;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  // Full analysis per row (same order), for callers that need the
  // conservative/optimistic chains or per-class z-scores.
  std::vector<SessionAnalysis> analyses;
  std::vector<ObservedStatistics> statistics;  // same order as rows
  std::vector<PointFailure> failures;
};

/// Runs every sweep point (or the single configured point when no sweep is
/// set): session -> tallies -> decoy estimation -> key rates -> anomaly
/// verdict. Each point gets its own RNG substream keyed to the distance, so
/// inserting points does not disturb the others. A failing point is recorded
/// in `failures` without aborting the rest.
ExperimentResult run_experiment(const ExperimentSpec& spec, int workers = 0);

/// The exact report header, in column order.
extern const char* const kReportHeader;

std::string render_csv(std::span<const ExperimentRow> rows);

/// JSON report: {"spec": <resolved config>, "rows": [...], "failures": [...]}.
/// Row objects carry the same fields as the CSV columns (clamps as an array).
std::string render_json(std::span<const ExperimentRow> rows,
                        std::span<const PointFailure> failures, const ExperimentSpec& spec);

/// Distance-aligned delta summary for the `compare` subcommand.
std::string render_compare_summary(std::span<const ExperimentRow> baseline,
                                   std::span<const ExperimentRow> attacked);

struct ReportPaths {
  std::optional<std::filesystem::path> csv;
  std::optional<std::filesystem::path> json;
};

/// Writes `<directory>/<stem>.csv` and/or `.json` per the output spec.
/// Throws std::invalid_argument for empty rows and IoError (naming the path)
/// when the directory or a file cannot be written.
ReportPaths emit_report(std::span<const ExperimentRow> rows,
                        std::span<const PointFailure> failures, const ExperimentSpec& spec,
                        std::string_view stem);

}  // namespace decoyqkd
