#pragma once

// Scenario configuration and the run driver behind the command line.
//
// A scenario is read from a TOML file (see configs/ for examples) and may
// then be adjusted field by field; command-line flags are applied on top of
// the file. validate() reports every problem at once before any work starts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdnpower/experiments.hpp"
#include "cdnpower/model.hpp"
#include "cdnpower/workload.hpp"

namespace cdnpower {

inline constexpr std::string_view kToolName = "cdnpower";
inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kOutputDirEnv = "CDNPOWER_OUTPUT_DIR";

enum class Algorithm { opt, opt_k, hibernate };

std::string_view to_string(Algorithm a);
// Accepts opt, opt-k, hibernate and all.
std::vector<Algorithm> parse_algorithms(std::string_view text);

// "30m", "2h", "90s", "1d", or a bare slot count.
int parse_duration_slots(std::string_view text, double slot_seconds);

struct InlineTrace {
  std::string id;
  std::vector<double> loads;
};

struct SynthTrace {
  DiurnalParams params;
  std::uint64_t seed = 0;
};

struct ClusterEntry {
  std::string id;
  std::optional<int> m_total;
  std::optional<double> lambda_cap;
  int utc_offset_seconds = 0;
};

struct SpikeEntry {
  double magnitude_frac = 0.30;
  int duration_slots = 12;
  double rho = 0.05;
  std::optional<std::size_t> start_slot;  // none: quietest night hour
  std::vector<std::string> clusters;      // empty: every cluster
};

struct ClusterSetEntry {
  std::string id;
  std::vector<std::string> members;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;  // empty: $CDNPOWER_OUTPUT_DIR, then ./out
  unsigned workers = 1;
  EnergyModel model;

  // Trace sources; exactly one kind may be used.
  std::vector<std::filesystem::path> csv_paths;
  double peak_capacity = 1.0;
  std::filesystem::path cluster_file;  // CSV: cluster_id,m_total,lambda_cap
  std::optional<FleetSpec> synth_fleet;
  std::vector<SynthTrace> synth_traces;
  std::vector<InlineTrace> inline_traces;

  std::vector<ClusterEntry> clusters;
  std::vector<Algorithm> algorithms;

  std::vector<double> kappas;
  std::vector<int> tau_slots;
  std::vector<double> lambda_caps;
  std::vector<std::int64_t> ks;
  std::vector<double> k_rates;
  std::vector<double> rhos;
  bool kappa_sweep = false;
  double availability_target_pct = 99.999;

  int dp_max_states = 0;  // 0: exact live-count grid

  std::vector<SpikeEntry> spikes;
  double flash_magnitude_frac = 0.30;
  int flash_duration_slots = 12;
  std::vector<ClusterSetEntry> cluster_sets;

  // Throws ValidationError listing every problem found.
  void validate() const;
  // Canonical JSON text of the resolved configuration.
  std::string canonical() const;
};

// Relative paths in the file are resolved against its directory.
ScenarioConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);

// Applies `key=value` settings (clusters, days, m_min, m_max, base_min, ...)
// to a fleet spec.
void apply_fleet_settings(FleetSpec& spec, const std::vector<std::string>& settings);

std::filesystem::path resolve_output_dir(const std::filesystem::path& requested);

// Cluster configs from a CSV with header cluster_id,m_total,lambda_cap.
std::vector<ClusterConfig> read_cluster_file(const std::filesystem::path& path);
void write_cluster_file(const std::filesystem::path& path, const std::vector<ClusterConfig>& clusters);

struct LoadedScenario {
  std::vector<LoadTrace> traces;        // sorted by cluster id
  std::vector<ClusterConfig> clusters;  // same order
  std::vector<int> utc_offsets;
};

// Materialises traces and cluster configs and applies the spikes.
LoadedScenario load_scenario(const ScenarioConfig& config);

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<std::string> files;
};

RunResult run_scenario(const ScenarioConfig& config);

// Re-aggregates every report under <run_dir>/reports into summary.csv.
// Throws IoError when there is nothing to aggregate.
std::vector<std::string> rebuild_summary(const std::filesystem::path& run_dir);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// manifest.json: tool, version, config_sha256, seed, created_utc and the
// SHA-256 of each listed output file.
void write_manifest(const std::filesystem::path& dir, std::string_view config_text,
                    std::uint64_t seed, const std::vector<std::string>& files);

}  // namespace cdnpower
