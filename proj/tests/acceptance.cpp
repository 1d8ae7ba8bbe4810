// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cdnpower/experiments.hpp"
#include "cdnpower/offline.hpp"
#include "oracle.hpp"

using namespace cdnpower;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and sizes.
constexpr int kOracleInstances = 240;
constexpr double kOracleSecondsLimit = 60.0;
constexpr double kOracleToleranceJoulesPerSlot = 1e-3;  // mJ rounding in the library
constexpr double kOptBandPct = 30.0;
constexpr double kOptSecondsLimit = 600.0;
constexpr double kBoundedRatio = 0.80;
constexpr double kBoundedRate = 1.0;
constexpr int kTwoHoursSlots = 24;
constexpr double kTransitionsAtTwoHours = 1.0;
constexpr double kFiveNines = 99.999;
constexpr int kGlbFleets = 20;
constexpr double kGlbTransitionShare = 0.70;
constexpr double kGlbEnergyBandPp = 10.0;

int failures = 0;

void verdict(int n, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Instance {
  LoadTrace trace;
  ClusterConfig cluster;
};

std::vector<Instance> random_instances() {
  std::mt19937_64 rng(20240501);
  std::uniform_int_distribution<int> n_dist(1, 6), m_dist(1, 4), cap_dist(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double caps[] = {0.5, 0.75, 1.0};
  std::vector<Instance> out;
  for (int i = 0; i < kOracleInstances; ++i) {
    Instance inst;
    const int n = n_dist(rng);
    inst.cluster = {fmt::format("r{}", i), m_dist(rng), caps[cap_dist(rng)]};
    inst.trace.cluster_id = inst.cluster.id;
    for (int t = 0; t < n; ++t) inst.trace.loads.push_back(u(rng) * inst.cluster.lambda_cap * inst.cluster.m_total);
    out.push_back(std::move(inst));
  }
  return out;
}

bool drops_nothing(const EnergyModel& model, const Instance& inst, const Schedule& s) {
  const auto m = compute_metrics(model, inst.trace, s, inst.cluster.m_total);
  return m.availability_pct == 100.0 && m.dropped_load == 0.0;
}

void offline_criteria(const EnergyModel& model) {
  const auto instances = random_instances();
  const oracle::Constants c;
  const std::int64_t oracle_ks[] = {0, 1, 2, 4};

  int exact = 0, oracle_match = 0, k_match = 0, k_checked = 0;
  int monotone = 0, converged = 0, clean = 0, clean_checked = 0;
  const auto start = Clock::now();
  for (const auto& inst : instances) {
    const std::size_t n = inst.trace.size();
    const double tol = kOracleToleranceJoulesPerSlot * static_cast<double>(n + 1);
    const auto opt = solve_opt(model, inst.trace, inst.cluster);
    const auto brute = brute_force_opt(model, inst.trace, inst.cluster);
    exact += opt.energy == brute.energy;
    const auto ref = oracle::brute_force(c, inst.trace.loads, inst.cluster.m_total, inst.cluster.lambda_cap);
    oracle_match += ref && std::abs(opt.energy.joules() - ref->energy) <= tol;

    const std::int64_t k_conv = 2 * inst.cluster.m_total * static_cast<std::int64_t>(n);
    const auto by_k = solve_opt_k(model, inst.trace, inst.cluster, k_conv + 3);
    for (auto k : oracle_ks) {
      ++k_checked;
      const auto lib = brute_force_opt(model, inst.trace, inst.cluster, k);
      const auto indep = oracle::brute_force(c, inst.trace.loads, inst.cluster.m_total, inst.cluster.lambda_cap, k);
      k_match += by_k.at(k).energy == lib.energy && indep &&
                 std::abs(by_k.at(k).energy.joules() - indep->energy) <= tol &&
                 by_k.at(k).schedule.transitions() <= k;
    }

    bool mono = true;
    for (std::int64_t k = 1; k <= k_conv + 3; ++k) mono = mono && by_k.at(k).energy <= by_k.at(k - 1).energy;
    monotone += mono;
    converged += by_k.at(k_conv).energy == opt.energy && by_k.at(k_conv + 3).energy == opt.energy;

    ++clean_checked;
    bool ok = drops_nothing(model, inst, opt.schedule);
    for (const auto& [k, r] : by_k) ok = ok && drops_nothing(model, inst, r.schedule);
    clean += ok;
  }
  const double elapsed = seconds_since(start);
  const int total = static_cast<int>(instances.size());

  verdict(1, exact == total && oracle_match == total && k_match == k_checked && elapsed < kOracleSecondsLimit,
          fmt::format("{} instances; OPT == brute force exactly on {}/{}, == independent oracle on {}/{}; "
                      "OPT(k) == filtered oracle on {}/{} (k in 0,1,2,4); {:.1f} s (limit {} s)",
                      total, exact, total, oracle_match, total, k_match, k_checked, elapsed,
                      kOracleSecondsLimit));
  verdict(2, monotone == total && converged == total,
          fmt::format("OPT(k) non-increasing in k on {}/{}; equals OPT for k >= 2Mn on {}/{}", monotone,
                      total, converged, total));
  verdict(3, clean == clean_checked,
          fmt::format("OPT and OPT(k) schedules drop nothing on {}/{} random instances", clean,
                      clean_checked));
}

const SweepRow& system_row(const std::vector<SweepRow>& rows, double kappa, int tau, double lambda) {
  for (const auto& r : rows) {
    if (r.cluster_id == kSystemRowId && r.kappa == kappa && r.tau_slots == tau && r.lambda_cap == lambda) return r;
  }
  throw std::runtime_error("missing sweep row");
}

void fleet_criteria(const EnergyModel& model, const SuiteOptions& options, const SuiteResult& r,
                    double suite_seconds) {
  // 4: OPT band and dominance over every Hibernate configuration.
  double min_cluster = 100.0;
  bool all_clean = true;
  for (const auto& row : r.opt.report.clusters) {
    min_cluster = std::min(min_cluster, row.metrics.energy_reduction_pct);
    all_clean = all_clean && row.metrics.availability_pct == 100.0;
  }
  double best_hib = -std::numeric_limits<double>::infinity();
  std::string best_at;
  for (const auto& row : r.hibernate_grid) {
    if (row.cluster_id == kSystemRowId && row.metrics.energy_reduction_pct > best_hib) {
      best_hib = row.metrics.energy_reduction_pct;
      best_at = fmt::format("kappa {} tau {}", row.kappa, row.tau_slots);
    }
  }
  const double opt_sys = r.opt.report.system.energy_reduction_pct;
  const int max_g = *std::max_element(r.opt.granularity.begin(), r.opt.granularity.end());
  verdict(4, min_cluster > kOptBandPct && opt_sys > best_hib && all_clean && suite_seconds < kOptSecondsLimit,
          fmt::format("{} clusters, min OPT reduction {:.2f}% (> {}%), system OPT {:.2f}% > best Hibernate "
                      "{:.2f}% ({}); states <= {} (max g {}); suite {:.0f} s (limit {} s)",
                      r.opt.report.clusters.size(), min_cluster, kOptBandPct, opt_sys, best_hib, best_at,
                      options.opt_max_states, max_g, suite_seconds, kOptSecondsLimit));

  // 5: bounded transitions.
  double at_rate = std::numeric_limits<double>::quiet_NaN();
  for (const auto& row : r.bounded.rows) {
    if (row.rate == kBoundedRate) at_rate = row.system_reduction_pct;
  }
  const double ratio = at_rate / opt_sys;
  verdict(5, ratio >= kBoundedRatio,
          fmt::format("{:.2f}% at {} transition/server/day vs unbounded OPT {:.2f}%: ratio {:.3f} (>= {}); "
                      "vs OPT on the same coarse grid ({:.2f}%): {:.3f}",
                      at_rate, kBoundedRate, opt_sys, ratio, kBoundedRatio, r.bounded.unbounded_system_pct,
                      at_rate / r.bounded.unbounded_system_pct));

  // 6: Hibernate tradeoffs.
  const double lambda = options.fleet.lambda_cap;
  auto taus = options.hibernate_tau_slots;
  std::sort(taus.begin(), taus.end());
  auto kappas = options.hibernate_kappas;
  std::sort(kappas.begin(), kappas.end());
  bool tau_mono = true, kappa_mono = true, avail_ok = true, two_hours = true;
  std::string at_two_hours;
  for (double k : kappas) {
    for (std::size_t i = 1; i < taus.size(); ++i) {
      tau_mono = tau_mono && system_row(r.hibernate_grid, k, taus[i], lambda).metrics.transitions_per_server_day <=
                                 system_row(r.hibernate_grid, k, taus[i - 1], lambda).metrics.transitions_per_server_day;
    }
    const double tr = system_row(r.hibernate_grid, k, kTwoHoursSlots, lambda).metrics.transitions_per_server_day;
    two_hours = two_hours && tr < kTransitionsAtTwoHours;
    at_two_hours += fmt::format(" kappa {}: {:.3f}", k, tr);
  }
  for (int t : taus) {
    for (std::size_t i = 1; i < kappas.size(); ++i) {
      const auto& lo = system_row(r.hibernate_grid, kappas[i - 1], t, lambda).metrics;
      const auto& hi = system_row(r.hibernate_grid, kappas[i], t, lambda).metrics;
      kappa_mono = kappa_mono && hi.energy_reduction_pct <= lo.energy_reduction_pct;
      avail_ok = avail_ok && hi.availability_pct >= lo.availability_pct;
    }
  }
  verdict(6, tau_mono && kappa_mono && avail_ok && two_hours,
          fmt::format("transitions non-increasing in tau: {}; reduction non-increasing in kappa: {}; "
                      "availability(kappa 0.1) >= availability(kappa 0): {}; transitions/server/day at 2 h:{}",
                      tau_mono, kappa_mono, avail_ok, at_two_hours));

  // 7: Lambda sweep.
  auto caps = options.lambda_caps;
  std::sort(caps.begin(), caps.end());
  bool energy_up = true, avail_down = true;
  for (double k : kappas) {
    for (std::size_t i = 1; i < caps.size(); ++i) {
      const auto& lo = system_row(r.lambda_grid, k, options.lambda_tau_slots, caps[i - 1]).metrics;
      const auto& hi = system_row(r.lambda_grid, k, options.lambda_tau_slots, caps[i]).metrics;
      energy_up = energy_up && hi.energy_reduction_pct >= lo.energy_reduction_pct;
      avail_down = avail_down && hi.availability_pct <= lo.availability_pct;
    }
  }
  verdict(7, energy_up && avail_down,
          fmt::format("over Lambda {{0.6..0.9}} at tau {}: reduction non-decreasing: {}; availability "
                      "non-increasing: {}",
                      options.lambda_tau_slots, energy_up, avail_down));

  // 8: flash crowd.
  bool dropped_mono = true;
  for (std::size_t i = 1; i < r.flash.rows.size(); ++i) {
    const auto& a = r.flash.rows[i - 1];
    const auto& b = r.flash.rows[i];
    if (a.rho == b.rho) dropped_mono = dropped_mono && b.system.dropped_load <= a.system.dropped_load;
  }
  bool frontier_mono = true, frontier_found = true;
  std::string frontier;
  double prev = -1.0;
  for (const auto& f : r.flash.frontier) {
    const double v = f.min_kappa.value_or(std::numeric_limits<double>::infinity());
    frontier_found = frontier_found && f.min_kappa.has_value();
    frontier_mono = frontier_mono && v >= prev;
    prev = v;
    frontier += fmt::format(" rho {}: {}", f.rho, f.min_kappa ? fmt::format("{}", *f.min_kappa) : "none");
  }
  verdict(8, dropped_mono && frontier_mono && frontier_found,
          fmt::format("spike at slot {}; dropped load non-increasing in kappa: {}; min kappa for {}%:{} "
                      "(non-decreasing: {})",
                      r.flash.start_slot, dropped_mono, kFiveNines, frontier, frontier_mono));
}

struct GlbTally {
  int fleets = 0, fewer_transitions = 0;
  bool availability = true;
  double max_gap_pp = 0.0;
};

GlbTally glb_tally(const EnergyModel& model, const GlbSpec& spec) {
  GlbTally t;
  for (int s = 1; s <= kGlbFleets; ++s) {
    const auto fleet = synth_glb_fleet(spec, 1000 + s);
    const auto rows = run_glb(model, fleet, spec, 1);
    std::vector<MetricsReport> sep, mer;
    for (const auto& row : rows) {
      t.availability = t.availability && row.merged.availability_pct >= row.separate_max_availability_pct;
      t.max_gap_pp = std::max(t.max_gap_pp,
                              std::abs(row.merged.energy_reduction_pct - row.separate.energy_reduction_pct));
      sep.push_back(row.separate);
      mer.push_back(row.merged);
    }
    ++t.fleets;
    t.fewer_transitions += aggregate(mer).transitions_per_server_day <= aggregate(sep).transitions_per_server_day;
  }
  return t;
}

void glb_criterion(const EnergyModel& model, const GlbSpec& spec) {
  const auto t = glb_tally(model, spec);
  const double share = static_cast<double>(t.fewer_transitions) / t.fleets;
  verdict(9, t.availability && share >= kGlbTransitionShare && t.max_gap_pp <= kGlbEnergyBandPp,
          fmt::format("kappa {} tau {}: merged availability >= best member: {}; merged transitions <= "
                      "separate in {}/{} fleets ({:.0f}%, need {:.0f}%); max reduction gap {:.2f} pp (<= {})",
                      spec.kappa, spec.tau_slots, t.availability, t.fewer_transitions, t.fleets, 100 * share,
                      100 * kGlbTransitionShare, t.max_gap_pp, kGlbEnergyBandPp));

  GlbSpec no_spares = spec;
  no_spares.kappa = 0.0;
  const auto z = glb_tally(model, no_spares);
  std::printf("INFO criterion 9 at kappa 0 tau %d: availability %s; fewer transitions in %d/%d fleets; "
              "max gap %.2f pp\n",
              no_spares.tau_slots, z.availability ? "ok" : "violated", z.fewer_transitions, z.fleets,
              z.max_gap_pp);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string without_timestamp(std::string manifest) {
  const auto pos = manifest.find("\"created_utc\"");
  if (pos == std::string::npos) return manifest;
  return manifest.erase(pos, manifest.find('\n', pos) - pos);
}

}  // namespace

int main() {
  const EnergyModel model;
  offline_criteria(model);

  const fs::path root = fs::temp_directory_path() / "cdnpower_acceptance";
  fs::remove_all(root);
  SuiteOptions options;

  auto start = Clock::now();
  const SuiteResult first = run_paper_suite(model, options, root / "run1");
  const double suite_seconds = seconds_since(start);
  fleet_criteria(model, options, first, suite_seconds);
  glb_criterion(model, options.glb);

  SuiteOptions again = options;
  again.workers = 2;
  run_paper_suite(model, again, root / "run2");
  std::size_t same = 0;
  for (const auto& f : first.files) same += slurp(root / "run1" / f) == slurp(root / "run2" / f);
  const bool manifest_same = without_timestamp(slurp(root / "run1/manifest.json")) ==
                             without_timestamp(slurp(root / "run2/manifest.json"));
  verdict(10, same == first.files.size() && manifest_same,
          fmt::format("two paper-suite runs with seed {} (1 and 2 workers): {}/{} files identical; manifest "
                      "identical apart from created_utc: {}",
                      options.seed, same, first.files.size(), manifest_same));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
