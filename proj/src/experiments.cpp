#include "cdnpower/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "cdnpower/error.hpp"
#include "cdnpower/numfmt.hpp"
#include "cdnpower/offline.hpp"
#include "cdnpower/scenario.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace cdnpower {

namespace {

constexpr double kSecondsPerDay = 86400.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

int log_uniform_size(std::mt19937_64& rng, int lo, int hi) {
  const double v = std::exp(uniform(rng, std::log(lo), std::log(hi)));
  return std::clamp(static_cast<int>(std::lround(v)), lo, hi);
}

// splitmix64 finaliser, used to derive independent seeds from one.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double trace_days(const LoadTrace& trace) {
  return static_cast<double>(trace.size()) * trace.slot_seconds / kSecondsPerDay;
}

// Metrics of an offline schedule known only by its energy: nothing is
// dropped and the transition count is not tracked.
MetricsReport offline_metrics(const EnergyModel& model, const LoadTrace& trace, int m_total,
                              Energy energy) {
  MetricsReport r;
  r.energy = energy;
  r.baseline = baseline_energy(model, trace, m_total);
  for (double l : trace.loads) r.input_load += l;
  r.served_load = r.input_load;
  r.server_days = m_total * static_cast<double>(trace.size()) * model.delta / kSecondsPerDay;
  return aggregate(std::span<const MetricsReport>(&r, 1));
}

void check_fraction_range(const char* what, double lo, double hi) {
  if (!(lo >= 0.0 && lo <= hi)) {
    throw ValidationError(fmt::format("{}: need 0 <= min <= max, got [{}, {}]", what, lo, hi));
  }
}

}  // namespace

void FleetSpec::validate() const {
  if (clusters < 1) throw ValidationError("fleet: clusters must be >= 1");
  if (days < 1) throw ValidationError("fleet: days must be >= 1");
  if (m_min < 1 || m_min > m_max) throw ValidationError("fleet: need 1 <= m_min <= m_max");
  check_fraction_range("fleet base", base_min, base_max);
  check_fraction_range("fleet amplitude", amp_min, amp_max);
  check_fraction_range("fleet noise", noise_min, noise_max);
  if (amp_min > base_min) throw ValidationError("fleet: amp_min must not exceed base_min");
  if (base_max + amp_max + noise_max > lambda_cap + 1e-12) {
    throw ValidationError(fmt::format(
        "fleet: base_max + amp_max + noise_max = {} exceeds lambda_cap {}; traces could be infeasible",
        base_max + amp_max + noise_max, lambda_cap));
  }
  ClusterConfig{"fleet", m_min, lambda_cap}.validate();
}

Fleet synth_fleet(const FleetSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Fleet fleet;
  for (int i = 0; i < spec.clusters; ++i) {
    DiurnalParams p;
    p.cluster_id = fmt::format("c{:02}", i);
    p.start_time = spec.start_time;
    p.days = spec.days;
    p.slot_seconds = spec.slot_seconds;
    p.m_total = log_uniform_size(rng, spec.m_min, spec.m_max);
    p.base_frac = uniform(rng, spec.base_min, spec.base_max);
    p.amp_frac = uniform(rng, spec.amp_min, std::min(spec.amp_max, p.base_frac));
    p.noise_frac = uniform(rng, spec.noise_min, spec.noise_max);
    const std::uint64_t trace_seed = rng();

    fleet.traces.push_back(synth_diurnal(p, trace_seed));
    fleet.clusters.push_back({p.cluster_id, p.m_total, spec.lambda_cap});
    fleet.params.push_back(p);
    fleet.seeds.push_back(trace_seed);
  }
  return fleet;
}

LoadTrace system_trace(const Fleet& fleet) {
  if (fleet.traces.empty()) throw ValidationError("fleet: no traces");
  LoadTrace sum = fleet.traces.front();
  sum.cluster_id = kSystemRowId;
  for (std::size_t i = 1; i < fleet.traces.size(); ++i) {
    const auto& t = fleet.traces[i];
    if (t.size() != sum.size()) throw ValidationError("fleet: traces differ in length");
    for (std::size_t s = 0; s < t.size(); ++s) sum.loads[s] += t.loads[s];
  }
  return sum;
}

OptFleetResult run_opt_fleet(const EnergyModel& model, const Fleet& fleet, int max_states,
                             unsigned workers, double lambda_cap_override) {
  const std::size_t n = fleet.traces.size();
  std::vector<ClusterRow> rows(n);
  std::vector<int> granularity(n);
  detail::parallel_for(n, workers, [&](std::size_t i) {
    ClusterConfig cfg = fleet.clusters[i];
    if (lambda_cap_override > 0.0) cfg.lambda_cap = lambda_cap_override;
    const int g = max_states > 0 ? granularity_for(cfg.m_total, max_states) : 1;
    const auto r = solve_opt(model, fleet.traces[i], cfg, {g});
    rows[i] = {cfg.id, compute_metrics(model, fleet.traces[i], r.schedule, cfg.m_total)};
    granularity[i] = g;
  });

  ParamEcho params;
  params.lambda_cap =
      lambda_cap_override > 0.0 ? lambda_cap_override : fleet.clusters.front().lambda_cap;

  // make_report sorts by id; keep granularity aligned with it.
  std::map<std::string, int> g_by_id;
  for (std::size_t i = 0; i < n; ++i) g_by_id[rows[i].cluster_id] = granularity[i];

  OptFleetResult result;
  result.report = make_report("fleet", "opt", params, std::move(rows));
  std::vector<MetricsReport> metrics;
  for (const auto& row : result.report.clusters) {
    metrics.push_back(row.metrics);
    result.granularity.push_back(g_by_id.at(row.cluster_id));
  }
  result.cdf = cdf_energy_reduction(metrics);
  return result;
}

BoundedResult run_bounded(const EnergyModel& model, const Fleet& fleet,
                          const std::vector<double>& rates, int max_states, unsigned workers) {
  if (rates.empty()) throw ValidationError("bounded: no transition rates");
  for (double r : rates) {
    if (!(r >= 0.0)) throw ValidationError(fmt::format("bounded: rate {} must be >= 0", r));
  }
  const std::size_t n = fleet.traces.size();
  std::vector<std::vector<MetricsReport>> per_cluster(n);
  std::vector<MetricsReport> unbounded(n);

  detail::parallel_for(n, workers, [&](std::size_t i) {
    const auto& trace = fleet.traces[i];
    const auto& cfg = fleet.clusters[i];
    const int g = granularity_for(cfg.m_total, max_states);
    const double days = trace_days(trace);
    std::vector<std::int64_t> budgets;
    for (double r : rates) budgets.push_back(std::llround(r * cfg.m_total * days));
    const auto energies = opt_k_energies(model, trace, cfg, budgets, {g});
    for (const Energy& e : energies) {
      per_cluster[i].push_back(offline_metrics(model, trace, cfg.m_total, e));
    }
    unbounded[i] = offline_metrics(model, trace, cfg.m_total, solve_opt(model, trace, cfg, {g}).energy);
  });

  BoundedResult result;
  for (std::size_t r = 0; r < rates.size(); ++r) {
    BoundPoint p;
    p.rate = rates[r];
    for (std::size_t i = 0; i < n; ++i) p.clusters.push_back(per_cluster[i][r]);
    result.points.push_back(std::move(p));
  }
  result.rows = reduction_vs_transition_bound(result.points);
  result.unbounded_system_pct = aggregate(unbounded).energy_reduction_pct;
  return result;
}

std::vector<double> FlashSpec::kappa_grid() const {
  if (!kappas.empty()) return kappas;
  std::vector<double> grid;
  for (int i = 0; i <= 16; ++i) grid.push_back(i / 40.0);
  return grid;
}

FlashResult run_flash_crowd(const EnergyModel& model, const Fleet& fleet, const FlashSpec& spec,
                            unsigned workers) {
  if (spec.rhos.empty()) throw ValidationError("flash crowd: no spike rates");
  const std::vector<double> kappas = spec.kappa_grid();
  const LoadTrace sum = system_trace(fleet);

  // One start slot for every rate: the footprint of the slowest ramp.
  std::size_t footprint = 0;
  for (double rho : spec.rhos) {
    SpikeSpec s{spec.magnitude_frac, spec.duration_slots, rho, 0};
    s.validate();
    footprint = std::max(footprint, s.footprint());
  }
  const std::size_t slots_per_day = static_cast<std::size_t>(kSecondsPerDay / sum.slot_seconds);
  FlashResult result;
  result.start_slot =
      quietest_hour_start(sum, spec.night_begin_hour, spec.night_end_hour, footprint,
                          static_cast<std::size_t>(spec.earliest_day) * slots_per_day);

  const double lambda_cap = fleet.clusters.front().lambda_cap;
  for (double rho : spec.rhos) {
    const SpikeSpec s{spec.magnitude_frac, spec.duration_slots, rho, result.start_slot};
    std::vector<LoadTrace> spiked;
    for (std::size_t i = 0; i < fleet.traces.size(); ++i) {
      spiked.push_back(inject_spike(fleet.traces[i], s, fleet.clusters[i].m_total));
    }
    const auto rows =
        sweep(model, spiked, fleet.clusters, {kappas, {spec.tau_slots}, {lambda_cap}}, workers);
    for (const auto& row : rows) {
      if (row.cluster_id == kSystemRowId) result.rows.push_back({rho, row.kappa, row.metrics});
    }
  }
  result.frontier = kappa_frontier(result.rows, spec.availability_target_pct);
  return result;
}

std::vector<FrontierRow> kappa_frontier(const std::vector<FlashRow>& rows, double target_pct) {
  std::vector<FrontierRow> frontier;
  for (const auto& row : rows) {
    if (frontier.empty() || frontier.back().rho != row.rho) frontier.push_back({row.rho, {}});
    auto& f = frontier.back();
    if (row.system.availability_pct >= target_pct && (!f.min_kappa || row.kappa < *f.min_kappa)) {
      f.min_kappa = row.kappa;
    }
  }
  return frontier;
}

void GlbSpec::validate() const {
  if (days < 1) throw ValidationError("glb: days must be >= 1");
  if (sets.empty()) throw ValidationError("glb: no cluster sets");
  for (const auto& [id, count] : sets) {
    if (id.empty() || count < 1) throw ValidationError("glb: every set needs an id and >= 1 member");
  }
  if (m_min < 1 || m_min > m_max) throw ValidationError("glb: need 1 <= m_min <= m_max");
  check_fraction_range("glb base", base_min, base_max);
  check_fraction_range("glb amplitude", amp_min, amp_max);
  check_fraction_range("glb noise", noise_min, noise_max);
  if (amp_min > base_min) throw ValidationError("glb: amp_min must not exceed base_min");
  if (period_days < 1 || copies < 1 || period_days * copies > days) {
    throw ValidationError("glb: period_days * copies must fit in the trace");
  }
  HibernateParams{kappa, tau_slots, lambda_cap}.validate();
}

GlbFleet synth_glb_fleet(const GlbSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  GlbFleet fleet;
  for (const auto& [set_id, count] : spec.sets) {
    GlbFleet::Set set;
    set.id = set_id;
    for (int first = 0; first < count; first += 2) {
      DiurnalParams p;
      p.start_time = spec.start_time;
      p.days = spec.days;
      p.slot_seconds = spec.slot_seconds;
      p.m_total = log_uniform_size(rng, spec.m_min, spec.m_max);
      p.base_frac = uniform(rng, spec.base_min, spec.base_max);
      p.amp_frac = uniform(rng, spec.amp_min, std::min(spec.amp_max, p.base_frac));
      p.noise_frac = uniform(rng, spec.noise_min, spec.noise_max);
      const std::uint64_t trace_seed = rng();
      for (int j = first; j < std::min(first + 2, count); ++j) {
        p.cluster_id = fmt::format("{}-{}", set_id, j);
        p.invert_noise = (j - first) == 1;
        set.traces.push_back(synth_diurnal(p, trace_seed));
        set.members.push_back({p.cluster_id, p.m_total, spec.lambda_cap});
      }
    }
    fleet.sets.push_back(std::move(set));
  }
  return fleet;
}

std::vector<GlbRow> run_glb(const EnergyModel& model, const GlbFleet& fleet, const GlbSpec& spec,
                            unsigned workers) {
  const HibernateParams params{spec.kappa, spec.tau_slots, spec.lambda_cap};
  params.validate();

  struct SetData {
    std::vector<LoadTrace> traces;
    std::vector<ClusterConfig> configs;
    ClusterSet merged;
  };
  std::vector<SetData> data;
  struct Job {
    std::size_t set;
    std::size_t index;  // virtual cluster index, or SIZE_MAX for the merged run
  };
  std::vector<Job> jobs;

  for (std::size_t s = 0; s < fleet.sets.size(); ++s) {
    const auto& set = fleet.sets[s];
    SetData d;
    for (std::size_t m = 0; m < set.traces.size(); ++m) {
      for (auto& v : slice_virtual_clusters(set.traces[m], spec.period_days, spec.copies)) {
        d.configs.push_back({v.cluster_id, set.members[m].m_total, spec.lambda_cap});
        d.traces.push_back(std::move(v));
      }
    }
    d.merged = make_cluster_set(set.id, d.traces, d.configs);
    for (std::size_t v = 0; v < d.traces.size(); ++v) jobs.push_back({s, v});
    jobs.push_back({s, SIZE_MAX});
    data.push_back(std::move(d));
  }

  std::vector<MetricsReport> results(jobs.size());
  detail::parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const auto& d = data[jobs[j].set];
    if (jobs[j].index == SIZE_MAX) {
      results[j] = run_hibernate(model, d.merged.merged_trace, d.merged.merged_config, params).metrics;
    } else {
      results[j] = run_hibernate(model, d.traces[jobs[j].index], d.configs[jobs[j].index], params).metrics;
    }
  });

  std::vector<GlbRow> rows;
  std::size_t j = 0;
  for (std::size_t s = 0; s < fleet.sets.size(); ++s) {
    GlbRow row;
    row.set_id = fleet.sets[s].id;
    row.members = fleet.sets[s].members.size();
    row.virtual_clusters = data[s].traces.size();
    std::vector<MetricsReport> separate;
    for (; jobs[j].index != SIZE_MAX; ++j) {
      separate.push_back(results[j]);
      row.separate_max_availability_pct =
          std::max(row.separate_max_availability_pct, results[j].availability_pct);
    }
    row.separate = aggregate(separate);
    row.merged = results[j++];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string SuiteOptions::describe() const {
  nlohmann::ordered_json j;
  j["suite"] = "paper";
  j["seed"] = seed;
  j["fleet"] = {{"clusters", fleet.clusters}, {"days", fleet.days},
                {"slot_seconds", fleet.slot_seconds}, {"start_time", fleet.start_time},
                {"lambda_cap", fleet.lambda_cap}, {"m_min", fleet.m_min}, {"m_max", fleet.m_max},
                {"base", {fleet.base_min, fleet.base_max}}, {"amp", {fleet.amp_min, fleet.amp_max}},
                {"noise", {fleet.noise_min, fleet.noise_max}}};
  nlohmann::ordered_json sets = nlohmann::ordered_json::array();
  for (const auto& [id, count] : glb.sets) sets.push_back({id, count});
  j["glb"] = {{"days", glb.days}, {"slot_seconds", glb.slot_seconds},
              {"start_time", glb.start_time}, {"lambda_cap", glb.lambda_cap}, {"sets", sets},
              {"m_min", glb.m_min}, {"m_max", glb.m_max}, {"base", {glb.base_min, glb.base_max}},
              {"amp", {glb.amp_min, glb.amp_max}}, {"noise", {glb.noise_min, glb.noise_max}},
              {"period_days", glb.period_days}, {"copies", glb.copies}, {"kappa", glb.kappa},
              {"tau_slots", glb.tau_slots}};
  j["opt_max_states"] = opt_max_states;
  j["opt_k_max_states"] = opt_k_max_states;
  j["bound_rates"] = bound_rates;
  j["hibernate_kappas"] = hibernate_kappas;
  j["hibernate_tau_slots"] = hibernate_tau_slots;
  j["lambda_caps"] = lambda_caps;
  j["lambda_tau_slots"] = lambda_tau_slots;
  j["flash"] = {{"magnitude_frac", flash.magnitude_frac}, {"duration_slots", flash.duration_slots},
                {"rhos", flash.rhos}, {"kappas", flash.kappa_grid()},
                {"tau_slots", flash.tau_slots},
                {"availability_target_pct", flash.availability_target_pct},
                {"night", {flash.night_begin_hour, flash.night_end_hour}},
                {"earliest_day", flash.earliest_day}};
  return j.dump();
}

SuiteResult run_paper_suite(const EnergyModel& model, const SuiteOptions& options,
                            const std::filesystem::path& out_dir) {
  model.validate();
  options.fleet.validate();
  options.glb.validate();
  SweepGrid{options.hibernate_kappas, options.hibernate_tau_slots, {options.fleet.lambda_cap}}
      .validate();
  SweepGrid{options.hibernate_kappas, {options.lambda_tau_slots}, options.lambda_caps}.validate();
  const unsigned w = options.workers;

  SuiteResult r;
  r.fleet = synth_fleet(options.fleet, options.seed);
  r.opt = run_opt_fleet(model, r.fleet, options.opt_max_states, w);
  r.bounded = run_bounded(model, r.fleet, options.bound_rates, options.opt_k_max_states, w);
  r.hibernate_grid = sweep(model, r.fleet.traces, r.fleet.clusters,
                           {options.hibernate_kappas, options.hibernate_tau_slots,
                            {options.fleet.lambda_cap}},
                           w);
  r.lambda_grid = sweep(model, r.fleet.traces, r.fleet.clusters,
                        {options.hibernate_kappas, {options.lambda_tau_slots}, options.lambda_caps}, w);
  for (double lambda : options.lambda_caps) {
    const auto opt = run_opt_fleet(model, r.fleet, options.opt_max_states, w, lambda);
    r.lambda_opt.emplace_back(lambda, opt.report.system.energy_reduction_pct);
  }
  r.flash = run_flash_crowd(model, r.fleet, options.flash, w);
  r.glb_fleet = synth_glb_fleet(options.glb, mix_seed(options.seed));
  r.glb = run_glb(model, r.glb_fleet, options.glb, w);

  auto put = [&](const std::string& name, const std::function<void(std::ostream&)>& fn) {
    write_file(out_dir / name, fn);
    r.files.push_back(name);
  };
  put("fleet.csv", [&](std::ostream& out) {
    out << "cluster_id,m_total,lambda_cap,base_frac,amp_frac,noise_frac,seed\n";
    for (std::size_t i = 0; i < r.fleet.clusters.size(); ++i) {
      const auto& p = r.fleet.params[i];
      out << p.cluster_id << ',' << p.m_total << ',' << format_double(r.fleet.clusters[i].lambda_cap)
          << ',' << format_double(p.base_frac) << ',' << format_double(p.amp_frac) << ','
          << format_double(p.noise_frac) << ',' << r.fleet.seeds[i] << '\n';
    }
  });
  put("fig2_cdf.csv", [&](std::ostream& out) { write_cdf_csv(out, r.opt.cdf); });
  put("fig2_opt_report.csv", [&](std::ostream& out) { emit(r.opt.report, ReportFormat::csv, out); });
  put("fig2_opt_report.json", [&](std::ostream& out) { emit(r.opt.report, ReportFormat::json, out); });
  put("fig3_bounded.csv", [&](std::ostream& out) { write_bounded_csv(out, r.bounded.rows); });
  put("fig3_reference.csv", [&](std::ostream& out) {
    out << "grid,max_states,system_reduction_pct\n";
    out << "coarse," << options.opt_k_max_states << ',' << format_double(r.bounded.unbounded_system_pct)
        << '\n';
    out << "fine," << options.opt_max_states << ','
        << format_double(r.opt.report.system.energy_reduction_pct) << '\n';
  });
  put("fig4_hibernate_grid.csv", [&](std::ostream& out) { write_sweep_csv(out, r.hibernate_grid); });
  put("fig5_lambda_grid.csv", [&](std::ostream& out) { write_sweep_csv(out, r.lambda_grid); });
  put("fig5_opt_reference.csv", [&](std::ostream& out) {
    out << "lambda_cap,opt_system_reduction_pct\n";
    for (const auto& [lambda, pct] : r.lambda_opt) {
      out << format_double(lambda) << ',' << format_double(pct) << '\n';
    }
  });
  put("fig6_flashcrowd.csv", [&](std::ostream& out) { write_flash_csv(out, r.flash.rows); });
  put("fig6_frontier.csv", [&](std::ostream& out) { write_frontier_csv(out, r.flash.frontier); });
  put("fig7_glb.csv", [&](std::ostream& out) { write_glb_csv(out, r.glb); });

  write_manifest(out_dir, options.describe(), options.seed, r.files);
  return r;
}

void write_flash_csv(std::ostream& out, const std::vector<FlashRow>& rows) {
  out << "rho,kappa,energy_reduction_pct,availability_pct,transitions_per_server_day,dropped_load\n";
  for (const auto& r : rows) {
    out << format_double(r.rho) << ',' << format_double(r.kappa) << ','
        << format_double(r.system.energy_reduction_pct) << ','
        << format_double(r.system.availability_pct) << ','
        << format_double(r.system.transitions_per_server_day) << ','
        << format_double(r.system.dropped_load) << '\n';
  }
}

void write_frontier_csv(std::ostream& out, const std::vector<FrontierRow>& rows) {
  out << "rho,min_kappa\n";
  for (const auto& r : rows) {
    out << format_double(r.rho) << ',' << (r.min_kappa ? format_double(*r.min_kappa) : "") << '\n';
  }
}

void write_glb_csv(std::ostream& out, const std::vector<GlbRow>& rows) {
  out << "set_id,members,virtual_clusters,mode,energy_reduction_pct,availability_pct,"
         "transitions_per_server_day\n";
  auto line = [&](const GlbRow& r, const char* mode, const MetricsReport& m) {
    out << r.set_id << ',' << r.members << ',' << r.virtual_clusters << ',' << mode << ','
        << format_double(m.energy_reduction_pct) << ',' << format_double(m.availability_pct) << ','
        << format_double(m.transitions_per_server_day) << '\n';
  };
  for (const auto& r : rows) {
    line(r, "separate", r.separate);
    line(r, "merged", r.merged);
  }
}

}  // namespace cdnpower
