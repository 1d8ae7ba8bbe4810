#include "cdnpower/online.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "cdnpower/error.hpp"
#include "parallel.hpp"

namespace cdnpower {

void HibernateParams::validate() const {
  if (!(kappa >= 0.0 && kappa <= 1.0)) {
    throw ValidationError(fmt::format("hibernate: kappa must lie in [0, 1], got {}", kappa));
  }
  if (tau_slots < 0) {
    throw ValidationError(fmt::format("hibernate: tau must be >= 0 slots, got {}", tau_slots));
  }
  if (!(lambda_cap > 0.0 && lambda_cap <= 1.0)) {
    throw ValidationError(
        fmt::format("hibernate: lambda_cap must lie in (0, 1], got {}", lambda_cap));
  }
}

int tau_to_slots(std::chrono::seconds tau, double slot_seconds) {
  if (tau.count() < 0) throw ValidationError("hibernate: tau must be >= 0");
  if (!(slot_seconds > 0.0)) throw ValidationError("hibernate: slot length must be > 0");
  return static_cast<int>(std::ceil(static_cast<double>(tau.count()) / slot_seconds - 1e-9));
}

HibernateState::HibernateState(int live, std::vector<int> streaks)
    : live_(live), streaks_(std::move(streaks)) {
  if (live_ < 0 || static_cast<std::size_t>(live_) > streaks_.size()) {
    throw ValidationError(fmt::format("hibernate state: {} live servers but {} streak entries",
                                      live_, streaks_.size()));
  }
}

HibernateState HibernateState::all_live(int m_total) {
  return HibernateState(m_total, std::vector<int>(static_cast<std::size_t>(m_total), 0));
}

HibernatePolicy::HibernatePolicy(HibernateParams params, int m_total)
    : HibernatePolicy(params, m_total, HibernateState::all_live(m_total)) {}

HibernatePolicy::HibernatePolicy(HibernateParams params, int m_total, HibernateState state)
    : params_(params),
      m_total_(m_total),
      spare_floor_(servers_required(params.kappa * m_total, 1.0)),
      state_(std::move(state)) {
  params_.validate();
  if (m_total_ < 1) throw ValidationError("hibernate: M must be >= 1");
  if (state_.live_ > m_total_) {
    throw ValidationError(
        fmt::format("hibernate: {} live servers exceed M = {}", state_.live_, m_total_));
  }
  state_.streaks_.resize(static_cast<std::size_t>(m_total_), 0);
}

StepResult HibernatePolicy::step(double load) {
  int live = state_.live_;
  std::vector<int>& streak = state_.streaks_;

  StepResult r;
  r.served = std::min(load, static_cast<double>(live));
  r.dropped = load - r.served;

  const int required = servers_required(load, params_.lambda_cap);
  const int spares = std::max(live - required, 0);
  const int busy = std::min(required, live);
  std::fill(streak.begin(), streak.begin() + busy, 0);
  for (int i = busy; i < live; ++i) ++streak[static_cast<std::size_t>(i)];

  if (spares < spare_floor_ || required > live) {
    // Spare capacity rule: restore the floor, plus any shortfall of live
    // servers below the requirement. New servers join at the top. An
    // overloaded cluster recovers even when the floor is zero.
    const int wanted = spare_floor_ - spares + std::max(required - live, 0);
    r.turned_on = std::min(wanted, m_total_ - live);
    std::fill(streak.begin() + live, streak.begin() + live + r.turned_on, 0);
    live += r.turned_on;
  } else if (spares > spare_floor_) {
    // Hibernate rule over servers required + floor + 1 .. live. Survivors
    // keep their order, so the live set stays a prefix.
    int kept = required + spare_floor_;
    for (int i = kept; i < live; ++i) {
      const int s = streak[static_cast<std::size_t>(i)];
      if (s >= params_.tau_slots) {
        ++r.turned_off;
      } else {
        streak[static_cast<std::size_t>(kept++)] = s;
      }
    }
    live = kept;
  }

  state_.live_ = live;
  r.next_live = live;
  r.transitions = r.turned_on + r.turned_off;
  return r;
}

StepResult hibernate_step(const HibernateState& state, double load,
                          const HibernateParams& params, const ClusterConfig& cluster) {
  if (load < 0.0) throw DomainError("hibernate: negative load");
  HibernatePolicy policy(params, cluster.m_total, state);
  StepResult r = policy.step(load);
  r.state = policy.state();
  return r;
}

HibernateRun run_hibernate(const EnergyModel& model, const LoadTrace& trace,
                           const ClusterConfig& cluster, const HibernateParams& params) {
  model.validate();
  cluster.validate();
  trace.validate();
  check_slot_length(model, trace);

  HibernatePolicy policy(params, cluster.m_total);
  const std::size_t n = trace.size();
  std::vector<int> live(n + 1);
  live[0] = cluster.m_total;
  for (std::size_t t = 0; t < n; ++t) {
    live[t + 1] = policy.state().live_count();
    policy.step(trace.loads[t]);
  }

  HibernateRun run;
  run.schedule = schedule_from_live(trace, std::move(live));
  run.metrics = compute_metrics(model, trace, run.schedule, cluster.m_total);
  return run;
}

void SweepGrid::validate() const {
  if (kappas.empty() || tau_slots.empty() || lambda_caps.empty()) {
    throw ValidationError("sweep: every grid axis needs at least one value");
  }
  for (double k : kappas) HibernateParams{k, 0, 0.75}.validate();
  for (int tau : tau_slots) HibernateParams{0.0, tau, 0.75}.validate();
  for (double l : lambda_caps) HibernateParams{0.0, 0, l}.validate();
}

std::vector<SweepRow> sweep(const EnergyModel& model, std::span<const LoadTrace> traces,
                            std::span<const ClusterConfig> clusters, const SweepGrid& grid,
                            unsigned workers) {
  grid.validate();
  model.validate();

  std::map<std::string, const ClusterConfig*> by_id;
  for (const auto& c : clusters) by_id[c.id] = &c;

  std::vector<const LoadTrace*> ordered;
  for (const auto& t : traces) {
    if (!by_id.count(t.cluster_id)) {
      throw ValidationError(fmt::format("sweep: no cluster config for trace {}", t.cluster_id));
    }
    ordered.push_back(&t);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LoadTrace* a, const LoadTrace* b) { return a->cluster_id < b->cluster_id; });

  struct Point {
    double kappa;
    int tau;
    double lambda;
  };
  std::vector<Point> points;
  for (double k : grid.kappas)
    for (int tau : grid.tau_slots)
      for (double l : grid.lambda_caps) points.push_back({k, tau, l});

  const std::size_t jobs = ordered.size() * points.size();
  std::vector<MetricsReport> results(jobs);
  detail::parallel_for(jobs, workers, [&](std::size_t j) {
    const LoadTrace& trace = *ordered[j / points.size()];
    const Point& p = points[j % points.size()];
    ClusterConfig cfg = *by_id.at(trace.cluster_id);
    cfg.lambda_cap = p.lambda;
    results[j] = run_hibernate(model, trace, cfg, {p.kappa, p.tau, p.lambda}).metrics;
  });

  std::vector<SweepRow> rows;
  rows.reserve(jobs + points.size());
  for (std::size_t j = 0; j < jobs; ++j) {
    const Point& p = points[j % points.size()];
    rows.push_back({ordered[j / points.size()]->cluster_id, p.kappa, p.tau, p.lambda, results[j]});
  }
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    std::vector<MetricsReport> per_cluster;
    for (std::size_t c = 0; c < ordered.size(); ++c) {
      per_cluster.push_back(results[c * points.size() + pi]);
    }
    const Point& p = points[pi];
    rows.push_back({kSystemRowId, p.kappa, p.tau, p.lambda, aggregate(per_cluster)});
  }
  return rows;
}

}  // namespace cdnpower
