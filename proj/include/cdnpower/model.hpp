#pragma once

// Domain types shared by every scheduler, and the per-slot energy accounting.
//
// Loads are expressed in units of one server's peak capacity. A slot with
// m live servers and served load s costs
//
//   delta * (m * p_idle + (p_peak - p_idle) * s)
//
// which is m * power(s / m) under the linear power model, independent of how
// s is split across the live servers. Every change of one in the live count
// costs alpha, in either direction.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdnpower/energy.hpp"

namespace cdnpower {

struct EnergyModel {
  double p_idle = 63.0;     // W
  double p_peak = 92.0;     // W
  double alpha = 37000.0;   // J per server transition
  double delta = 300.0;     // s per slot

  void validate() const;
};

struct ClusterConfig {
  std::string id;
  int m_total = 1;
  double lambda_cap = 0.75;

  void validate() const;
};

struct LoadTrace {
  std::string cluster_id;
  std::int64_t start_time = 0;  // UTC epoch seconds at the start of slot 1
  int slot_seconds = 300;
  std::vector<double> loads;

  std::size_t size() const { return loads.size(); }
  void validate() const;
};

// live[0] is the state before the first slot; live[t], served[t-1] and
// dropped[t-1] describe slot t.
struct Schedule {
  std::vector<int> live;
  std::vector<double> served;
  std::vector<double> dropped;

  std::size_t slots() const { return served.size(); }
  std::int64_t transitions() const;
};

struct MetricsReport {
  Energy energy;
  Energy baseline;
  double energy_reduction_pct = 0.0;
  double availability_pct = 100.0;
  std::int64_t transitions_total = 0;
  double transitions_per_server_day = 0.0;

  // Raw totals kept so that reports can be re-aggregated exactly.
  double served_load = 0.0;
  double dropped_load = 0.0;
  double input_load = 0.0;
  double server_days = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

// Watts drawn by one server at utilisation `load` in [0, 1].
double power(const EnergyModel& model, double load);

// Energy of one slot with `live` servers serving `served` in aggregate.
Energy slot_energy(const EnergyModel& model, int live, double served);

Energy transition_energy(const EnergyModel& model, std::int64_t count);

// Smallest live count that serves `load` without exceeding the target
// threshold, i.e. ceil(load / lambda_cap) with a 1e-12 relative slack.
int servers_required(double load, double lambda_cap);

inline bool can_serve(double load, int live, double lambda_cap) {
  return live >= servers_required(load, lambda_cap);
}

std::int64_t count_transitions(std::span<const int> live);

// Throws StructuralError when the trace slot length differs from delta.
void check_slot_length(const EnergyModel& model, const LoadTrace& trace);

Energy schedule_energy(const EnergyModel& model, const LoadTrace& trace,
                       const Schedule& schedule);

// All m_total servers live for the whole trace.
Energy baseline_energy(const EnergyModel& model, const LoadTrace& trace,
                       int m_total);
Schedule baseline_schedule(const LoadTrace& trace, int m_total);

// Serves min(lambda_t, m_t) in every slot and drops the rest.
Schedule schedule_from_live(const LoadTrace& trace, std::vector<int> live);

MetricsReport compute_metrics(const EnergyModel& model, const LoadTrace& trace,
                              const Schedule& schedule, int m_total);

// System-wide view: energies, loads, transitions and server-days are summed
// first and the percentages recomputed from the sums.
MetricsReport aggregate(std::span<const MetricsReport> reports);

}  // namespace cdnpower
