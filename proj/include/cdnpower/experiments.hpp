#pragma once

// The figure-family experiments on synthetic fleets, and the paper-suite
// bundle that runs all of them and writes their tables.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdnpower/metrics.hpp"
#include "cdnpower/model.hpp"
#include "cdnpower/online.hpp"
#include "cdnpower/workload.hpp"

namespace cdnpower {

struct FleetSpec {
  int clusters = 22;
  int days = 25;
  int slot_seconds = 300;
  std::int64_t start_time = 1229644800;  // 2008-12-19 00:00 UTC
  double lambda_cap = 0.75;
  int m_min = 150;
  int m_max = 1400;
  double base_min = 0.22, base_max = 0.32;
  double amp_min = 0.08, amp_max = 0.14;
  double noise_min = 0.005, noise_max = 0.015;

  void validate() const;
};

struct Fleet {
  std::vector<ClusterConfig> clusters;
  std::vector<LoadTrace> traces;
  std::vector<DiurnalParams> params;
  std::vector<std::uint64_t> seeds;
};

// Cluster sizes are log-uniform in [m_min, m_max]; shape parameters are
// uniform in their ranges with amplitude capped by the base.
Fleet synth_fleet(const FleetSpec& spec, std::uint64_t seed);

// Slot-wise sum of all traces in the fleet.
LoadTrace system_trace(const Fleet& fleet);

// OPT on every cluster with the live-count grid coarsened to at most
// `max_states` states.
struct OptFleetResult {
  ExperimentReport report;
  std::vector<CdfPoint> cdf;
  std::vector<int> granularity;  // per cluster, in report order
};
OptFleetResult run_opt_fleet(const EnergyModel& model, const Fleet& fleet, int max_states,
                             unsigned workers, double lambda_cap_override = 0.0);

// OPT(k) on every cluster with k = rate * M * days for each rate.
struct BoundedResult {
  std::vector<BoundPoint> points;
  std::vector<BoundRow> rows;
  double unbounded_system_pct = 0.0;  // OPT on the same coarse grid
};
BoundedResult run_bounded(const EnergyModel& model, const Fleet& fleet,
                          const std::vector<double>& rates, int max_states, unsigned workers);

struct FlashSpec {
  double magnitude_frac = 0.30;
  int duration_slots = 12;
  std::vector<double> rhos = {0.02, 0.05, 0.1, 0.2};
  std::vector<double> kappas;  // empty: 0, 0.025, ..., 0.4
  int tau_slots = 24;
  double availability_target_pct = 99.999;
  double night_begin_hour = 0.0;
  double night_end_hour = 6.0;
  int earliest_day = 2;

  std::vector<double> kappa_grid() const;
};

struct FlashRow {
  double rho = 0.0;
  double kappa = 0.0;
  MetricsReport system;
};

struct FrontierRow {
  double rho = 0.0;
  std::optional<double> min_kappa;  // none if no kappa on the grid suffices
};

struct FlashResult {
  std::size_t start_slot = 0;
  std::vector<FlashRow> rows;  // rho-major, kappa ascending
  std::vector<FrontierRow> frontier;
};

// Injects the same spike, at the same slot, into every cluster and runs
// Hibernate over the kappa grid for each spike rate.
FlashResult run_flash_crowd(const EnergyModel& model, const Fleet& fleet, const FlashSpec& spec,
                            unsigned workers);

// Smallest kappa per rho whose availability meets the target.
std::vector<FrontierRow> kappa_frontier(const std::vector<FlashRow>& rows, double target_pct);

struct GlbSpec {
  int days = 25;
  int slot_seconds = 300;
  std::int64_t start_time = 1229644800;
  double lambda_cap = 0.75;
  // Set id and member count; members come in anti-correlated pairs.
  std::vector<std::pair<std::string, int>> sets = {{"bay", 4}, {"dc", 2}, {"ny", 2}, {"tx", 2}};
  int m_min = 100, m_max = 600;
  double base_min = 0.20, base_max = 0.30;
  double amp_min = 0.06, amp_max = 0.12;
  double noise_min = 0.03, noise_max = 0.05;
  int period_days = 3;
  int copies = 8;
  double kappa = 0.1;
  int tau_slots = 24;

  void validate() const;
};

struct GlbFleet {
  struct Set {
    std::string id;
    std::vector<ClusterConfig> members;
    std::vector<LoadTrace> traces;
  };
  std::vector<Set> sets;
};

GlbFleet synth_glb_fleet(const GlbSpec& spec, std::uint64_t seed);

struct GlbRow {
  std::string set_id;
  std::size_t members = 0;
  std::size_t virtual_clusters = 0;
  MetricsReport separate;  // Hibernate per virtual cluster, aggregated
  double separate_max_availability_pct = 0.0;
  MetricsReport merged;    // Hibernate on the whole set as one cluster
};

// Slices every member into virtual clusters and compares Hibernate run on
// each of them against Hibernate on their union. Rows follow set order.
std::vector<GlbRow> run_glb(const EnergyModel& model, const GlbFleet& fleet, const GlbSpec& spec,
                            unsigned workers);

struct SuiteOptions {
  std::uint64_t seed = 1;
  unsigned workers = 1;
  FleetSpec fleet;
  GlbSpec glb;
  int opt_max_states = 200;
  int opt_k_max_states = 40;
  std::vector<double> bound_rates = {0.0, 0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0};
  std::vector<double> hibernate_kappas = {0.0, 0.1};
  std::vector<int> hibernate_tau_slots = {0, 3, 6, 12, 24, 48, 96};
  std::vector<double> lambda_caps = {0.6, 0.7, 0.75, 0.8, 0.9};
  int lambda_tau_slots = 24;
  FlashSpec flash;

  // Canonical text form; hashed into the manifest.
  std::string describe() const;
};

struct SuiteResult {
  Fleet fleet;
  OptFleetResult opt;
  BoundedResult bounded;
  std::vector<SweepRow> hibernate_grid;
  std::vector<SweepRow> lambda_grid;
  std::vector<std::pair<double, double>> lambda_opt;  // (lambda_cap, OPT system reduction)
  FlashResult flash;
  GlbFleet glb_fleet;
  std::vector<GlbRow> glb;
  std::vector<std::string> files;  // written, relative to the output directory
};

// Runs every figure family on a fresh synthetic fleet and writes the tables
// and a manifest into `out_dir`. Output is a function of the options alone.
SuiteResult run_paper_suite(const EnergyModel& model, const SuiteOptions& options,
                            const std::filesystem::path& out_dir);

// Figure tables not covered by metrics.hpp.
void write_flash_csv(std::ostream& out, const std::vector<FlashRow>& rows);
void write_frontier_csv(std::ostream& out, const std::vector<FrontierRow>& rows);
void write_glb_csv(std::ostream& out, const std::vector<GlbRow>& rows);

}  // namespace cdnpower
