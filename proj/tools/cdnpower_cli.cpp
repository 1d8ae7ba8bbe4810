// cdnpower: command-line driver for the server power management simulator.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 infeasible
// trace or refused instance, 4 I/O or malformed input.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "cdnpower/error.hpp"
#include "cdnpower/experiments.hpp"
#include "cdnpower/scenario.hpp"
#include "cdnpower/workload.hpp"

namespace fs = std::filesystem;
using namespace cdnpower;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDomain = 3;
constexpr int kExitIo = 4;

struct RunFlags {
  std::string config;
  std::string name;
  std::vector<std::string> synth;
  CLI::Option* synth_option = nullptr;
  std::vector<std::string> traces;
  std::string clusters;
  std::optional<double> peak_capacity;
  std::string algo;
  std::vector<double> kappas;
  std::vector<std::string> taus;
  std::vector<double> lambdas;
  std::vector<std::int64_t> ks;
  std::vector<double> k_rates;
  std::vector<double> rhos;
  bool kappa_sweep = false;
  std::optional<double> availability_target;
  std::optional<double> magnitude;
  std::string duration;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> workers;
  std::optional<int> max_states;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "TOML scenario file")->check(CLI::ExistingFile);
  cmd->add_option("--name", f.name, "Scenario name");
  f.synth_option =
      cmd->add_option("--synth", f.synth, "Synthetic fleet, key=value settings (clusters=22 days=25 ...)")
          ->expected(0, -1);
  cmd->add_option("--trace", f.traces, "Trace CSV file(s)")->delimiter(',');
  cmd->add_option("--clusters", f.clusters, "Cluster CSV: cluster_id,m_total,lambda_cap");
  cmd->add_option("--peak-capacity", f.peak_capacity, "Divide ingested loads by this");
  cmd->add_option("--algo", f.algo, "opt, opt-k, hibernate or all (comma separated)");
  cmd->add_option("--kappa", f.kappas, "Spare capacity thresholds")->delimiter(',');
  cmd->add_option("--tau", f.taus, "Hibernate thresholds (30m, 2h or slots)")->delimiter(',');
  cmd->add_option("--lambda", f.lambdas, "Target load thresholds")->delimiter(',');
  cmd->add_option("--k", f.ks, "Transition budgets for opt-k")->delimiter(',');
  cmd->add_option("--k-rate", f.k_rates, "Transition budgets per server per day")->delimiter(',');
  cmd->add_option("--rho", f.rhos, "Flash-crowd spike rates")->delimiter(',');
  cmd->add_flag("--kappa-sweep", f.kappa_sweep, "Sweep kappa and report the availability frontier");
  cmd->add_option("--availability-target", f.availability_target, "Frontier target in percent");
  cmd->add_option("--magnitude", f.magnitude, "Flash-crowd peak as a fraction of M");
  cmd->add_option("--duration", f.duration, "Flash-crowd plateau (1h, 12 ...)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--workers", f.workers, "Worker threads");
  cmd->add_option("--max-states", f.max_states, "Coarsen the DP to at most this many live counts");
}

ScenarioConfig build_config(const RunFlags& f) {
  ScenarioConfig c;
  if (!f.config.empty()) c = load_config(f.config);
  const double delta = c.model.delta;

  if (!f.name.empty()) c.name = f.name;
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.workers) c.workers = *f.workers;
  if (f.max_states) c.dp_max_states = *f.max_states;

  auto clear_sources = [&] {
    c.csv_paths.clear();
    c.cluster_file.clear();
    c.synth_fleet.reset();
    c.synth_traces.clear();
    c.inline_traces.clear();
  };
  if (f.synth_option->count() > 0) {
    clear_sources();
    FleetSpec spec;
    spec.slot_seconds = static_cast<int>(delta);
    std::vector<std::string> settings;
    for (const auto& s : f.synth) {
      if (!s.empty()) settings.push_back(s);
    }
    apply_fleet_settings(spec, settings);
    c.synth_fleet = spec;
  }
  if (!f.traces.empty()) {
    clear_sources();
    for (const auto& t : f.traces) c.csv_paths.emplace_back(t);
  }
  if (!f.clusters.empty()) c.cluster_file = f.clusters;
  if (f.peak_capacity) c.peak_capacity = *f.peak_capacity;

  if (!f.algo.empty()) c.algorithms = parse_algorithms(f.algo);
  if (!f.kappas.empty()) c.kappas = f.kappas;
  if (!f.taus.empty()) {
    c.tau_slots.clear();
    for (const auto& t : f.taus) {
      try {
        c.tau_slots.push_back(parse_duration_slots(t, delta));
      } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("tau: {}", e.what()));
      }
    }
  }
  if (!f.lambdas.empty()) c.lambda_caps = f.lambdas;
  if (!f.ks.empty()) c.ks = f.ks;
  if (!f.k_rates.empty()) c.k_rates = f.k_rates;
  if (!f.rhos.empty()) c.rhos = f.rhos;
  if (f.kappa_sweep) c.kappa_sweep = true;
  if (f.availability_target) c.availability_target_pct = *f.availability_target;
  if (f.magnitude) c.flash_magnitude_frac = *f.magnitude;
  if (!f.duration.empty()) c.flash_duration_slots = parse_duration_slots(f.duration, delta);
  return c;
}

std::vector<ClusterConfig> clusters_for(const std::vector<LoadTrace>& traces, const std::string& file) {
  const auto all = read_cluster_file(file);
  std::vector<ClusterConfig> out;
  for (const auto& t : traces) {
    auto it = std::find_if(all.begin(), all.end(), [&](const ClusterConfig& c) { return c.id == t.cluster_id; });
    if (it == all.end()) throw ValidationError(fmt::format("clusters: no entry for cluster {}", t.cluster_id));
    out.push_back(*it);
  }
  return out;
}

int report_error(const std::exception& e, int code) {
  std::cerr << "cdnpower: error: " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Server power management simulator for CDN clusters"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run a scenario and write reports");
  add_run_flags(run, run_flags);

  RunFlags lint_flags;
  auto* validate = app.add_subcommand("validate", "Check a scenario without running it");
  add_run_flags(validate, lint_flags);

  std::vector<std::string> ingest_in;
  std::string ingest_out;
  double ingest_peak = 1.0;
  int ingest_slot = 300;
  auto* ingest = app.add_subcommand("ingest", "Normalise trace CSV files into one trace file");
  ingest->add_option("--in", ingest_in, "Input trace CSV file(s)")->required()->delimiter(',');
  ingest->add_option("--out", ingest_out, "Output trace CSV")->required();
  ingest->add_option("--peak-capacity", ingest_peak, "Divide loads by this");
  ingest->add_option("--slot-seconds", ingest_slot, "Slot length in seconds");

  std::vector<std::string> synth_settings;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic fleet (trace.csv, clusters.csv)");
  synth->add_option("settings", synth_settings, "key=value fleet settings");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--out", synth_out, "Output directory");

  std::string spike_trace, spike_clusters, spike_out, spike_duration = "1h";
  double spike_rho = 0.05, spike_magnitude = 0.30;
  std::optional<std::size_t> spike_start;
  std::vector<std::string> spike_targets;
  auto* spike = app.add_subcommand("spike", "Inject a flash-crowd spike into a trace file");
  spike->add_option("--trace", spike_trace, "Input trace CSV")->required();
  spike->add_option("--clusters", spike_clusters, "Cluster CSV")->required();
  spike->add_option("--out", spike_out, "Output trace CSV")->required();
  spike->add_option("--rho", spike_rho, "Ramp rate, fraction of M per slot");
  spike->add_option("--magnitude", spike_magnitude, "Peak as a fraction of M");
  spike->add_option("--duration", spike_duration, "Plateau length (1h, 12 ...)");
  spike->add_option("--start", spike_start, "Zero-based start slot (default: quietest night hour)");
  spike->add_option("--only", spike_targets, "Cluster ids to spike (default: all)")->delimiter(',');

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-aggregate the reports of a run into summary.csv");
  report->add_option("run_dir", report_dir, "Run directory")->required();

  SuiteOptions suite;
  std::string suite_out;
  auto* paper = app.add_subcommand("paper-suite", "Run every figure-family experiment on a synthetic fleet");
  paper->add_option("--seed", suite.seed, "Random seed");
  paper->add_option("--workers", suite.workers, "Worker threads");
  paper->add_option("--out", suite_out, "Output directory");
  paper->add_option("--opt-max-states", suite.opt_max_states, "Live-count states for OPT");
  paper->add_option("--opt-k-max-states", suite.opt_k_max_states, "Live-count states for OPT(k)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) {
      const auto result = run_scenario(build_config(run_flags));
      std::cout << "wrote " << result.files.size() << " files to " << result.output_dir.string() << '\n';
    } else if (*validate) {
      const auto config = build_config(lint_flags);
      const auto loaded = load_scenario(config);
      std::cout << "ok: " << loaded.traces.size() << " clusters\n" << config.canonical() << '\n';
    } else if (*ingest) {
      std::vector<LoadTrace> traces;
      for (const auto& path : ingest_in) {
        for (auto& t : ingest_csv_file(path, ingest_slot, ingest_peak)) traces.push_back(std::move(t));
      }
      std::sort(traces.begin(), traces.end(),
                [](const LoadTrace& a, const LoadTrace& b) { return a.cluster_id < b.cluster_id; });
      write_csv_file(ingest_out, traces);
      std::cout << "ingested " << traces.size() << " clusters into " << ingest_out << '\n';
    } else if (*synth) {
      FleetSpec spec;
      apply_fleet_settings(spec, synth_settings);
      const Fleet fleet = synth_fleet(spec, synth_seed);
      const fs::path dir = resolve_output_dir(synth_out);
      write_csv_file(dir / "trace.csv", fleet.traces);
      write_cluster_file(dir / "clusters.csv", fleet.clusters);
      std::cout << "wrote " << fleet.traces.size() << " traces to " << dir.string() << '\n';
    } else if (*spike) {
      auto traces = ingest_csv_file(spike_trace);
      const auto clusters = clusters_for(traces, spike_clusters);
      const double slot = traces.empty() ? 300.0 : traces.front().slot_seconds;
      SpikeSpec spec{spike_magnitude, parse_duration_slots(spike_duration, slot), spike_rho, 0};
      spec.validate();
      auto targeted = [&](const std::string& id) {
        return spike_targets.empty() ||
               std::find(spike_targets.begin(), spike_targets.end(), id) != spike_targets.end();
      };
      if (spike_start) {
        spec.start_slot = *spike_start;
      } else {
        LoadTrace sum;
        for (const auto& t : traces) {
          if (!targeted(t.cluster_id)) continue;
          if (sum.loads.empty()) {
            sum = t;
          } else {
            for (std::size_t i = 0; i < std::min(sum.size(), t.size()); ++i) sum.loads[i] += t.loads[i];
          }
        }
        if (sum.loads.empty()) throw ValidationError("spike: no cluster selected");
        const auto per_day = static_cast<std::size_t>(86400.0 / slot);
        const std::size_t earliest = sum.size() >= 3 * per_day ? 2 * per_day : 0;
        spec.start_slot = quietest_hour_start(sum, 0.0, 6.0, spec.footprint(), earliest);
      }
      for (std::size_t i = 0; i < traces.size(); ++i) {
        if (targeted(traces[i].cluster_id)) traces[i] = inject_spike(traces[i], spec, clusters[i].m_total);
      }
      write_csv_file(spike_out, traces);
      std::cout << "spike at slot " << spec.start_slot << " written to " << spike_out << '\n';
    } else if (*report) {
      rebuild_summary(report_dir);
      std::cout << "wrote " << (fs::path(report_dir) / "summary.csv").string() << '\n';
    } else if (*paper) {
      const fs::path dir = resolve_output_dir(suite_out);
      const auto result = run_paper_suite(EnergyModel{}, suite, dir);
      std::cout << "wrote " << result.files.size() + 1 << " files to " << dir.string() << '\n';
    }
  } catch (const ValidationError& e) {
    return report_error(e, kExitValidation);
  } catch (const IngestionError& e) {
    return report_error(e, kExitIo);
  } catch (const IoError& e) {
    return report_error(e, kExitIo);
  } catch (const DomainError& e) {
    return report_error(e, kExitDomain);
  } catch (const StructuralError& e) {
    return report_error(e, kExitDomain);
  } catch (const RefusalError& e) {
    return report_error(e, kExitDomain);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(e, kExitIo);
  } catch (const std::exception& e) {
    return report_error(e, 1);
  }
  return 0;
}
