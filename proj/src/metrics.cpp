#include "cdnpower/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "cdnpower/error.hpp"
#include "cdnpower/numfmt.hpp"
#include "json.hpp"

namespace cdnpower {

namespace {

using nlohmann::ordered_json;

ordered_json metrics_to_json(const MetricsReport& m) {
  ordered_json j;
  j["energy_mj"] = m.energy.millijoules();
  j["baseline_mj"] = m.baseline.millijoules();
  j["energy_joules"] = m.energy.joules();
  j["baseline_joules"] = m.baseline.joules();
  j["energy_reduction_pct"] = m.energy_reduction_pct;
  j["availability_pct"] = m.availability_pct;
  j["transitions_total"] = m.transitions_total;
  j["transitions_per_server_day"] = m.transitions_per_server_day;
  j["served_load"] = m.served_load;
  j["dropped_load"] = m.dropped_load;
  j["input_load"] = m.input_load;
  j["server_days"] = m.server_days;
  return j;
}

MetricsReport metrics_from_json(const ordered_json& j) {
  MetricsReport m;
  m.energy = Energy::from_millijoules(j.at("energy_mj").get<std::int64_t>());
  m.baseline = Energy::from_millijoules(j.at("baseline_mj").get<std::int64_t>());
  m.energy_reduction_pct = j.at("energy_reduction_pct").get<double>();
  m.availability_pct = j.at("availability_pct").get<double>();
  m.transitions_total = j.at("transitions_total").get<std::int64_t>();
  m.transitions_per_server_day = j.at("transitions_per_server_day").get<double>();
  m.served_load = j.at("served_load").get<double>();
  m.dropped_load = j.at("dropped_load").get<double>();
  m.input_load = j.at("input_load").get<double>();
  m.server_days = j.at("server_days").get<double>();
  return m;
}

template <typename T>
void put_optional(ordered_json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
void get_optional(const ordered_json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

void csv_row(std::ostream& out, const std::string& id, const MetricsReport& m) {
  out << id << ',' << format_double(m.energy.joules()) << ',' << format_double(m.baseline.joules())
      << ',' << format_double(m.energy_reduction_pct) << ',' << format_double(m.availability_pct)
      << ',' << m.transitions_total << ',' << format_double(m.transitions_per_server_day) << ','
      << format_double(m.served_load) << ',' << format_double(m.dropped_load) << ','
      << format_double(m.input_load) << ',' << format_double(m.server_days) << '\n';
}

}  // namespace

ExperimentReport make_report(std::string scenario, std::string algorithm, ParamEcho params,
                             std::vector<ClusterRow> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ClusterRow& a, const ClusterRow& b) { return a.cluster_id < b.cluster_id; });
  std::vector<MetricsReport> metrics;
  metrics.reserve(rows.size());
  for (const auto& r : rows) metrics.push_back(r.metrics);

  ExperimentReport report;
  report.scenario = std::move(scenario);
  report.algorithm = std::move(algorithm);
  report.params = params;
  report.clusters = std::move(rows);
  report.system = aggregate(metrics);
  return report;
}

void emit(const ExperimentReport& report, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::csv) {
    out << kReportCsvHeader << '\n';
    for (const auto& row : report.clusters) csv_row(out, row.cluster_id, row.metrics);
    csv_row(out, kSystemRowId, report.system);
    return;
  }

  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["scenario"] = report.scenario;
  j["algorithm"] = report.algorithm;
  ordered_json params = ordered_json::object();
  put_optional(params, "kappa", report.params.kappa);
  put_optional(params, "tau_slots", report.params.tau_slots);
  put_optional(params, "lambda_cap", report.params.lambda_cap);
  put_optional(params, "rho", report.params.rho);
  put_optional(params, "k", report.params.k);
  j["params"] = std::move(params);
  ordered_json clusters = ordered_json::array();
  for (const auto& row : report.clusters) {
    ordered_json c;
    c["cluster_id"] = row.cluster_id;
    c.update(metrics_to_json(row.metrics));
    clusters.push_back(std::move(c));
  }
  j["clusters"] = std::move(clusters);
  j["system"] = metrics_to_json(report.system);
  out << j.dump(2) << '\n';
}

void emit_file(const ExperimentReport& report, ReportFormat format,
               const std::filesystem::path& path) {
  write_file(path, [&](std::ostream& out) { emit(report, format, out); });
}

ExperimentReport report_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("report: not valid JSON: {}", e.what()));
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) {
      throw ValidationError(fmt::format("report: unsupported schema_version {}", version));
    }
    ExperimentReport report;
    report.scenario = j.at("scenario").get<std::string>();
    report.algorithm = j.at("algorithm").get<std::string>();
    const auto& params = j.at("params");
    get_optional(params, "kappa", report.params.kappa);
    get_optional(params, "tau_slots", report.params.tau_slots);
    get_optional(params, "lambda_cap", report.params.lambda_cap);
    get_optional(params, "rho", report.params.rho);
    get_optional(params, "k", report.params.k);
    for (const auto& c : j.at("clusters")) {
      report.clusters.push_back({c.at("cluster_id").get<std::string>(), metrics_from_json(c)});
    }
    report.system = metrics_from_json(j.at("system"));
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("report: {}", e.what()));
  }
}

ExperimentReport report_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open report {}", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return report_from_json(text.str());
}

std::vector<CdfPoint> cdf_energy_reduction(std::span<const MetricsReport> clusters) {
  if (clusters.empty()) throw ValidationError("cdf: no clusters");
  std::vector<double> reductions;
  for (const auto& c : clusters) reductions.push_back(c.energy_reduction_pct);
  std::sort(reductions.begin(), reductions.end());

  std::vector<double> xs;
  for (int x = 0; x <= 100; ++x) xs.push_back(x);
  for (double r : reductions) {
    if (r >= 0.0 && r <= 100.0) xs.push_back(r);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  const double n = static_cast<double>(reductions.size());
  std::vector<CdfPoint> out;
  out.reserve(xs.size());
  for (double x : xs) {
    const auto below = std::lower_bound(reductions.begin(), reductions.end(), x) - reductions.begin();
    out.push_back({x, (n - static_cast<double>(below)) / n});
  }
  return out;
}

double nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("nearest_rank: no values");
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("nearest_rank: p must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size()) - 1e-12));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<BoundRow> reduction_vs_transition_bound(std::span<const BoundPoint> points) {
  std::vector<BoundRow> rows;
  for (const auto& p : points) {
    if (p.clusters.empty()) throw ValidationError("bounded table: point without clusters");
    std::vector<double> per_cluster;
    for (const auto& c : p.clusters) per_cluster.push_back(c.energy_reduction_pct);
    BoundRow row;
    row.rate = p.rate;
    row.system_reduction_pct = aggregate(p.clusters).energy_reduction_pct;
    row.q1_pct = nearest_rank(per_cluster, 0.25);
    row.median_pct = nearest_rank(per_cluster, 0.5);
    row.q3_pct = nearest_rank(per_cluster, 0.75);
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BoundRow& a, const BoundRow& b) { return a.rate < b.rate; });
  return rows;
}

void write_cdf_csv(std::ostream& out, std::span<const CdfPoint> points) {
  out << "x_pct,fraction_of_clusters\n";
  for (const auto& p : points) out << format_double(p.x_pct) << ',' << format_double(p.fraction) << '\n';
}

void write_bounded_csv(std::ostream& out, std::span<const BoundRow> rows) {
  out << "transitions_per_server_day,system_reduction_pct,q1_pct,median_pct,q3_pct\n";
  for (const auto& r : rows) {
    out << format_double(r.rate) << ',' << format_double(r.system_reduction_pct) << ','
        << format_double(r.q1_pct) << ',' << format_double(r.median_pct) << ','
        << format_double(r.q3_pct) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "cluster_id,kappa,tau_slots,lambda_cap,energy_reduction_pct,availability_pct,"
         "transitions_per_server_day\n";
  for (const auto& r : rows) {
    out << r.cluster_id << ',' << format_double(r.kappa) << ',' << r.tau_slots << ','
        << format_double(r.lambda_cap) << ',' << format_double(r.metrics.energy_reduction_pct)
        << ',' << format_double(r.metrics.availability_pct) << ','
        << format_double(r.metrics.transitions_per_server_day) << '\n';
  }
}

void write_schedule_csv(std::ostream& out, const Schedule& schedule) {
  out << "slot,live,served,dropped\n";
  for (std::size_t t = 0; t < schedule.slots(); ++t) {
    out << t + 1 << ',' << schedule.live[t + 1] << ',' << format_double(schedule.served[t]) << ','
        << format_double(schedule.dropped[t]) << '\n';
  }
}

void write_dp_summary_json(std::ostream& out, const MetricsReport& metrics) {
  ordered_json j;
  j["energy_joules"] = metrics.energy.joules();
  j["transitions"] = metrics.transitions_total;
  j["reduction_pct"] = metrics.energy_reduction_pct;
  out << j.dump(2) << '\n';
}

void write_file(const std::filesystem::path& path,
                const std::function<void(std::ostream&)>& write) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  write(out);
  out.flush();
  if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

}  // namespace cdnpower
