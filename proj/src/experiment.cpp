#include "decoyqkd/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "decoyqkd/models.hpp"
#include "decoyqkd/rng.hpp"

namespace decoyqkd {

const char* const kReportHeader =
    "distance_km,eta,Q_mu,E_mu,Q_nu,E_nu,Y0_hat,Y0_lo,Y0_hi,Y1_lower,Q1_lower,e1_upper,"
    "R_decoy,R_baseline,verdict,clamps";

namespace {

std::string format_g9(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.9g", value);
  return buffer;
}

std::string join_clamps(const std::vector<std::string>& clamps) {
  if (clamps.empty()) return "none";
  std::string joined;
  for (const std::string& clamp : clamps) {
    if (!joined.empty()) joined += ';';
    joined += clamp;
  }
  return joined;
}

ExperimentRow make_row(std::size_t index, double distance_km, const ExperimentSpec& spec,
                       const ObservedStatistics& observed, const SessionAnalysis& analysis) {
  ExperimentRow row;
  row.point_index = index;
  row.distance_km = distance_km;
  ChannelDetector channel = spec.protocol.channel;
  channel.distance_km = distance_km;
  row.eta = transmittance(channel);
  if (const ClassTally* signal = observed.find(ClassLabel::kSignal)) {
    row.q_mu = signal->observed_gain();
    row.e_mu = signal->observed_qber();
  }
  if (const ClassTally* weak = observed.find(ClassLabel::kWeakDecoy)) {
    row.q_nu = weak->observed_gain();
    row.e_nu = weak->observed_qber();
  }
  const DecoyEstimate& est = analysis.plug_in;
  row.y0_hat = est.y0.point;
  row.y0_lo = est.y0.lo;
  row.y0_hi = est.y0.hi;
  row.y1_lower = est.y1_lower;
  row.q1_lower = est.q1_lower;
  row.e1_upper = est.e1_upper;
  row.r_decoy = est.r_decoy;
  row.r_baseline = est.r_baseline;
  row.verdict = analysis.anomaly.verdict();
  row.clamps = join_clamps(est.clamps);
  return row;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, int workers) {
  validate_spec(spec);
  std::vector<double> points =
      spec.sweep ? spec.sweep->distances() : std::vector<double>{spec.protocol.channel.distance_km};

  ExperimentResult result;
  result.rows.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double distance = points[i];
    try {
      ProtocolConfig protocol = spec.protocol;
      protocol.channel.distance_km = distance;
      // Substreams are keyed to the distance itself, not the loop index, so
      // editing the sweep grid cannot shift unrelated points.
      protocol.rng_seed = point_seed(spec.protocol.rng_seed, distance);
      SessionOptions options;
      options.workers = workers;
      SessionResult session = run_session(protocol, spec.eve, options);
      SessionAnalysis analysis =
          analyze_session(session.statistics, protocol.channel, spec.analysis);
      result.rows.push_back(make_row(i, distance, spec, session.statistics, analysis));
      result.analyses.push_back(std::move(analysis));
      result.statistics.push_back(std::move(session.statistics));
    } catch (const std::exception& error) {
      result.failures.push_back({i, distance, error.what()});
    }
  }
  return result;
}

std::string render_csv(std::span<const ExperimentRow> rows) {
  std::string out = kReportHeader;
  out += '\n';
  for (const ExperimentRow& row : rows) {
    out += format_g9(row.distance_km);
    out += ',';
    out += format_g9(row.eta);
    out += ',';
    out += format_g9(row.q_mu);
    out += ',';
    out += format_g9(row.e_mu);
    out += ',';
    out += format_g9(row.q_nu);
    out += ',';
    out += format_g9(row.e_nu);
    out += ',';
    out += format_g9(row.y0_hat);
    out += ',';
    out += format_g9(row.y0_lo);
    out += ',';
    out += format_g9(row.y0_hi);
    out += ',';
    out += format_g9(row.y1_lower);
    out += ',';
    out += format_g9(row.q1_lower);
    out += ',';
    out += format_g9(row.e1_upper);
    out += ',';
    out += format_g9(row.r_decoy);
    out += ',';
    out += format_g9(row.r_baseline);
    out += ',';
    out += row.verdict;
    out += ',';
    out += row.clamps;
    out += '\n';
  }
  return out;
}

namespace {

nlohmann::json spec_to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  for (const IntensityClass& cls : spec.protocol.schedule) {
    nlohmann::json& section = j[std::string(to_string(cls.label))];
    section["mu"] = cls.mean_photon_number;
    section["probability"] = cls.send_probability;
  }
  j["hwang_decoy"]["enabled"] =
      spec.protocol.schedule.end() !=
      std::find_if(spec.protocol.schedule.begin(), spec.protocol.schedule.end(),
                   [](const IntensityClass& cls) { return cls.label == ClassLabel::kHwangDecoy; });
  const ChannelDetector& ch = spec.protocol.channel;
  j["channel"] = {{"distance_km", ch.distance_km},
                  {"attenuation_db_per_km", ch.attenuation_db_per_km},
                  {"extra_loss_db", ch.extra_loss_db},
                  {"detector_efficiency", ch.detector_efficiency},
                  {"dark_count_prob", ch.dark_count_prob},
                  {"misalignment_error", ch.misalignment_error}};
  j["protocol"] = {{"pulses", spec.protocol.pulses_total},
                   {"seed", spec.protocol.rng_seed},
                   {"basis_match_prob", spec.protocol.basis_match_prob},
                   {"qber_abort_threshold", spec.protocol.qber_abort_threshold}};
  j["eve"]["strategy"] = spec.eve.kind == EveStrategy::Kind::kPns ? "pns" : "none";
  j["eve"]["single_block_prob"] = spec.eve.single_block_prob;
  if (spec.eve.forward_transmittance_override) {
    j["eve"]["forward_transmittance"] = *spec.eve.forward_transmittance_override;
  }
  if (spec.sweep) {
    j["sweep"] = {{"start_km", spec.sweep->start_km},
                  {"end_km", spec.sweep->end_km},
                  {"step_km", spec.sweep->step_km}};
  } else {
    j["sweep"] = nullptr;
  }
  j["analysis"] = {{"confidence", spec.analysis.confidence},
                   {"z_threshold", spec.analysis.z_threshold},
                   {"f_ec", spec.analysis.f_ec},
                   {"decoy_qber_abort", spec.analysis.decoy_qber_abort}};
  std::vector<std::string> formats;
  if (spec.output.csv) formats.push_back("csv");
  if (spec.output.json) formats.push_back("json");
  j["output"] = {{"directory", spec.output.directory}, {"formats", formats}};
  return j;
}

std::vector<std::string> split_clamps(const std::string& joined) {
  if (joined == "none") return {};
  std::vector<std::string> clamps;
  std::size_t start = 0;
  while (start <= joined.size()) {
    const auto semi = joined.find(';', start);
    clamps.push_back(joined.substr(start, semi == std::string::npos ? semi : semi - start));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  return clamps;
}

}  // namespace

std::string render_json(std::span<const ExperimentRow> rows,
                        std::span<const PointFailure> failures, const ExperimentSpec& spec) {
  nlohmann::json j;
  j["spec"] = spec_to_json(spec);
  j["rows"] = nlohmann::json::array();
  for (const ExperimentRow& row : rows) {
    j["rows"].push_back({{"distance_km", row.distance_km},
                         {"eta", row.eta},
                         {"Q_mu", row.q_mu},
                         {"E_mu", row.e_mu},
                         {"Q_nu", row.q_nu},
                         {"E_nu", row.e_nu},
                         {"Y0_hat", row.y0_hat},
                         {"Y0_lo", row.y0_lo},
                         {"Y0_hi", row.y0_hi},
                         {"Y1_lower", row.y1_lower},
                         {"Q1_lower", row.q1_lower},
                         {"e1_upper", row.e1_upper},
                         {"R_decoy", row.r_decoy},
                         {"R_baseline", row.r_baseline},
                         {"verdict", row.verdict},
                         {"clamps", split_clamps(row.clamps)}});
  }
  j["failures"] = nlohmann::json::array();
  for (const PointFailure& failure : failures) {
    j["failures"].push_back({{"point_index", failure.point_index},
                             {"distance_km", failure.distance_km},
                             {"message", failure.message}});
  }
  return j.dump(2) + "\n";
}

std::string render_compare_summary(std::span<const ExperimentRow> baseline,
                                   std::span<const ExperimentRow> attacked) {
  std::string out = "distance_km,R_decoy_none,R_decoy_pns,delta_R,verdict_none,verdict_pns\n";
  const std::size_t count = std::min(baseline.size(), attacked.size());
  for (std::size_t i = 0; i < count; ++i) {
    out += format_g9(baseline[i].distance_km);
    out += ',';
    out += format_g9(baseline[i].r_decoy);
    out += ',';
    out += format_g9(attacked[i].r_decoy);
    out += ',';
    out += format_g9(attacked[i].r_decoy - baseline[i].r_decoy);
    out += ',';
    out += baseline[i].verdict;
    out += ',';
    out += attacked[i].verdict;
    out += '\n';
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write report file: " + path.string());
  }
  out << content;
  out.flush();
  if (!out) {
    throw IoError("cannot write report file: " + path.string());
  }
}

}  // namespace

ReportPaths emit_report(std::span<const ExperimentRow> rows,
                        std::span<const PointFailure> failures, const ExperimentSpec& spec,
                        std::string_view stem) {
  if (rows.empty()) {
    throw std::invalid_argument("emit_report: rows must be non-empty");
  }
  const std::filesystem::path directory(spec.output.directory);
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) {
    throw IoError("cannot create output directory: " + directory.string() + " (" + ec.message() +
                  ")");
  }
  ReportPaths paths;
  if (spec.output.csv) {
    const std::filesystem::path path = directory / (std::string(stem) + ".csv");
    write_file(path, render_csv(rows));
    paths.csv = path;
  }
  if (spec.output.json) {
    const std::filesystem::path path = directory / (std::string(stem) + ".json");
    write_file(path, render_json(rows, failures, spec));
    paths.json = path;
  }
  return paths;
}

}  // namespace decoyqkd
