#include "cdnpower/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

#include "cdnpower/error.hpp"

namespace cdnpower {

namespace {

constexpr double kSecondsPerDay = 86400.0;

bool nearly_equal(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b));
}

}  // namespace

void EnergyModel::validate() const {
  if (!(p_idle >= 0.0) || !(p_peak >= p_idle)) {
    throw ValidationError(fmt::format(
        "energy model: need 0 <= p_idle <= p_peak, got p_idle={} p_peak={}", p_idle, p_peak));
  }
  if (!(alpha >= 0.0)) {
    throw ValidationError(fmt::format("energy model: alpha must be >= 0, got {}", alpha));
  }
  if (!(delta > 0.0)) {
    throw ValidationError(fmt::format("energy model: delta must be > 0, got {}", delta));
  }
}

void ClusterConfig::validate() const {
  if (m_total < 1) {
    throw ValidationError(fmt::format("cluster {}: m_total must be >= 1, got {}", id, m_total));
  }
  if (!(lambda_cap > 0.0 && lambda_cap <= 1.0)) {
    throw ValidationError(
        fmt::format("cluster {}: lambda_cap must lie in (0, 1], got {}", id, lambda_cap));
  }
}

void LoadTrace::validate() const {
  if (loads.empty()) {
    throw ValidationError(fmt::format("trace {}: no slots", cluster_id));
  }
  if (slot_seconds <= 0) {
    throw ValidationError(fmt::format("trace {}: slot_seconds must be > 0", cluster_id));
  }
  for (std::size_t t = 0; t < loads.size(); ++t) {
    if (!(loads[t] >= 0.0) || !std::isfinite(loads[t])) {
      throw ValidationError(
          fmt::format("trace {}: load at slot {} is {} (must be >= 0)", cluster_id, t + 1, loads[t]));
    }
  }
}

std::int64_t Schedule::transitions() const { return count_transitions(live); }

double power(const EnergyModel& model, double load) {
  if (!(load >= 0.0 && load <= 1.0)) {
    throw DomainError(fmt::format("power: load {} outside [0, 1]", load));
  }
  return model.p_idle + (model.p_peak - model.p_idle) * load;
}

Energy slot_energy(const EnergyModel& model, int live, double served) {
  return Energy::from_joules(
      model.delta * (live * model.p_idle + (model.p_peak - model.p_idle) * served));
}

Energy transition_energy(const EnergyModel& model, std::int64_t count) {
  return Energy::from_joules(model.alpha) * count;
}

int servers_required(double load, double lambda_cap) {
  if (load <= 0.0) return 0;
  const double q = load / lambda_cap;
  return static_cast<int>(std::ceil(q * (1.0 - 1e-12)));
}

std::int64_t count_transitions(std::span<const int> live) {
  std::int64_t total = 0;
  for (std::size_t t = 1; t < live.size(); ++t) {
    total += std::abs(live[t] - live[t - 1]);
  }
  return total;
}

void check_slot_length(const EnergyModel& model, const LoadTrace& trace) {
  if (static_cast<double>(trace.slot_seconds) != model.delta) {
    throw StructuralError(fmt::format("trace {}: slot length {} s differs from model delta {} s",
                                      trace.cluster_id, trace.slot_seconds, model.delta));
  }
}

Energy schedule_energy(const EnergyModel& model, const LoadTrace& trace,
                       const Schedule& schedule) {
  const std::size_t n = trace.size();
  if (schedule.live.size() != n + 1 || schedule.served.size() != n ||
      schedule.dropped.size() != n) {
    throw StructuralError(fmt::format(
        "schedule shape (live={}, served={}, dropped={}) does not match a trace of {} slots",
        schedule.live.size(), schedule.served.size(), schedule.dropped.size(), n));
  }
  if (schedule.live[0] < 0) {
    throw StructuralError("schedule: negative initial live count");
  }

  Energy total;
  for (std::size_t t = 0; t < n; ++t) {
    const int live = schedule.live[t + 1];
    const double served = schedule.served[t];
    const double dropped = schedule.dropped[t];
    if (live < 0) {
      throw StructuralError(fmt::format("schedule: negative live count at slot {}", t + 1));
    }
    if (dropped < -1e-12 || served < -1e-12 || !nearly_equal(served + dropped, trace.loads[t])) {
      throw StructuralError(
          fmt::format("schedule: served {} + dropped {} != load {} at slot {}", served, dropped,
                      trace.loads[t], t + 1));
    }
    if (served > live + 1e-9) {
      throw StructuralError(
          fmt::format("schedule: {} live servers cannot serve {} at slot {}", live, served, t + 1));
    }
    total += slot_energy(model, live, served);
  }
  return total + transition_energy(model, schedule.transitions());
}

Energy baseline_energy(const EnergyModel& model, const LoadTrace& trace, int m_total) {
  Energy total;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    if (trace.loads[t] > m_total) {
      throw DomainError(fmt::format("baseline: load {} exceeds {} servers at slot {}",
                                    trace.loads[t], m_total, t + 1));
    }
    total += slot_energy(model, m_total, trace.loads[t]);
  }
  return total;
}

Schedule baseline_schedule(const LoadTrace& trace, int m_total) {
  return schedule_from_live(trace, std::vector<int>(trace.size() + 1, m_total));
}

Schedule schedule_from_live(const LoadTrace& trace, std::vector<int> live) {
  if (live.size() != trace.size() + 1) {
    throw StructuralError(fmt::format("live sequence of length {} does not fit {} slots",
                                      live.size(), trace.size()));
  }
  Schedule s;
  s.served.reserve(trace.size());
  s.dropped.reserve(trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const double served = std::min(trace.loads[t], static_cast<double>(live[t + 1]));
    s.served.push_back(served);
    s.dropped.push_back(trace.loads[t] - served);
  }
  s.live = std::move(live);
  return s;
}

MetricsReport compute_metrics(const EnergyModel& model, const LoadTrace& trace,
                              const Schedule& schedule, int m_total) {
  MetricsReport r;
  r.energy = schedule_energy(model, trace, schedule);
  r.baseline = baseline_energy(model, trace, m_total);
  r.transitions_total = schedule.transitions();
  for (std::size_t t = 0; t < trace.size(); ++t) {
    r.input_load += trace.loads[t];
    r.served_load += schedule.served[t];
    r.dropped_load += schedule.dropped[t];
  }
  r.server_days = m_total * static_cast<double>(trace.size()) * model.delta / kSecondsPerDay;

  // Recomputing through aggregate() keeps one definition of the percentages.
  return aggregate(std::span<const MetricsReport>(&r, 1));
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  MetricsReport sum;
  for (const auto& r : reports) {
    sum.energy += r.energy;
    sum.baseline += r.baseline;
    sum.transitions_total += r.transitions_total;
    sum.served_load += r.served_load;
    sum.dropped_load += r.dropped_load;
    sum.input_load += r.input_load;
    sum.server_days += r.server_days;
  }
  sum.energy_reduction_pct =
      sum.baseline.millijoules() > 0
          ? 100.0 * (1.0 - static_cast<double>(sum.energy.millijoules()) /
                               static_cast<double>(sum.baseline.millijoules()))
          : 0.0;
  // Equivalent to 100 * served / input, but exactly 100 when nothing drops.
  sum.availability_pct =
      sum.input_load > 0.0 ? 100.0 - 100.0 * sum.dropped_load / sum.input_load : 100.0;
  sum.transitions_per_server_day =
      sum.server_days > 0.0 ? static_cast<double>(sum.transitions_total) / sum.server_days : 0.0;
  return sum;
}

}  // namespace cdnpower
