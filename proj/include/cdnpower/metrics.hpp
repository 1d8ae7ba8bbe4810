#pragma once

// Experiment reports and the tables behind each figure family.
//
// Report JSON (schema_version 1):
//   { "schema_version": 1, "scenario": str, "algorithm": str,
//     "params": { "kappa"?, "tau_slots"?, "lambda_cap"?, "rho"?, "k"? },
//     "clusters": [ {"cluster_id": str, <metrics>}, ... ],
//     "system": { <metrics> } }
// where <metrics> holds energy_mj, baseline_mj (integers), energy_joules,
// baseline_joules, energy_reduction_pct, availability_pct,
// transitions_total, transitions_per_server_day, served_load,
// dropped_load, input_load and server_days.
//
// Report CSV: header kReportCsvHeader, one row per cluster sorted by id, then
// one row with cluster_id "_system".

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdnpower/model.hpp"
#include "cdnpower/online.hpp"

namespace cdnpower {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kReportCsvHeader =
    "cluster_id,energy_joules,baseline_joules,energy_reduction_pct,availability_pct,"
    "transitions_total,transitions_per_server_day,served_load,dropped_load,input_load,"
    "server_days";

struct ParamEcho {
  std::optional<double> kappa;
  std::optional<int> tau_slots;
  std::optional<double> lambda_cap;
  std::optional<double> rho;
  std::optional<std::int64_t> k;

  bool operator==(const ParamEcho&) const = default;
};

struct ClusterRow {
  std::string cluster_id;
  MetricsReport metrics;

  bool operator==(const ClusterRow&) const = default;
};

struct ExperimentReport {
  std::string scenario;
  std::string algorithm;
  ParamEcho params;
  std::vector<ClusterRow> clusters;  // sorted by cluster id
  MetricsReport system;              // aggregate of the cluster rows

  bool operator==(const ExperimentReport&) const = default;
};

// Sorts the rows and computes the system row from their raw totals.
ExperimentReport make_report(std::string scenario, std::string algorithm, ParamEcho params,
                             std::vector<ClusterRow> rows);

enum class ReportFormat { csv, json };

void emit(const ExperimentReport& report, ReportFormat format, std::ostream& out);
void emit_file(const ExperimentReport& report, ReportFormat format,
               const std::filesystem::path& path);

// Inverse of the JSON form of emit().
ExperimentReport report_from_json(std::string_view text);
ExperimentReport report_from_json_file(const std::filesystem::path& path);

struct CdfPoint {
  double x_pct;
  double fraction;  // share of clusters whose reduction is >= x_pct
};

// Evaluated at x = 0, 1, ..., 100 and at every cluster's own reduction, so
// each step of the function appears in the table.
std::vector<CdfPoint> cdf_energy_reduction(std::span<const MetricsReport> clusters);

// Nearest-rank percentile: the ceil(p N)-th smallest value, p in (0, 1].
double nearest_rank(std::vector<double> values, double p);

// One transition bound (transitions per server per day) with the per-cluster
// results solved under it.
struct BoundPoint {
  double rate = 0.0;
  std::vector<MetricsReport> clusters;
};

struct BoundRow {
  double rate = 0.0;
  double system_reduction_pct = 0.0;
  double q1_pct = 0.0;
  double median_pct = 0.0;
  double q3_pct = 0.0;
};

std::vector<BoundRow> reduction_vs_transition_bound(std::span<const BoundPoint> points);

// Figure tables. Doubles are written in shortest round-trip form.
void write_cdf_csv(std::ostream& out, std::span<const CdfPoint> points);
void write_bounded_csv(std::ostream& out, std::span<const BoundRow> rows);
// cluster_id,kappa,tau_slots,lambda_cap,energy_reduction_pct,availability_pct,
// transitions_per_server_day
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
// slot,live,served,dropped with slot 1..n
void write_schedule_csv(std::ostream& out, const Schedule& schedule);
// {"energy_joules", "transitions", "reduction_pct"}
void write_dp_summary_json(std::ostream& out, const MetricsReport& metrics);

// Opens `path` for binary writing, creating parent directories, and hands
// the stream to `write`. Throws IoError on failure.
void write_file(const std::filesystem::path& path,
                const std::function<void(std::ostream&)>& write);

}  // namespace cdnpower
