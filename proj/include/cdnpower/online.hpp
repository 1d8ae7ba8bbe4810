#pragma once

// The Hibernate online policy.
//
// Servers are numbered 1..M and the first m_t are live. Each slot the policy
// serves what it can, marks live servers above ceil(lambda_t / Lambda) as
// spare, tops the spare pool back up to ceil(kappa M) when it runs short,
// and otherwise turns off servers above the spare floor that have been spare
// for the last tau slots. Decisions made in slot t take effect in t + 1.

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdnpower/model.hpp"

namespace cdnpower {

struct HibernateParams {
  double kappa = 0.0;       // spare capacity threshold in [0, 1]
  int tau_slots = 0;        // consecutive spare slots before a server may sleep
  double lambda_cap = 0.75; // target load threshold

  void validate() const;
};

// Converts a wall-clock hibernate threshold to slots, rounding up.
int tau_to_slots(std::chrono::seconds tau, double slot_seconds);

class HibernateState {
 public:
  // All M servers live, no spare history.
  static HibernateState all_live(int m_total);

  int live_count() const { return live_; }
  // Streaks of the live servers, index 0 is server 1.
  std::span<const int> spare_streaks() const {
    return std::span<const int>(streaks_).first(static_cast<std::size_t>(live_));
  }

  HibernateState() = default;
  HibernateState(int live, std::vector<int> streaks);

 private:
  friend class HibernatePolicy;

  int live_ = 0;
  std::vector<int> streaks_;  // sized M; entries past live_ are unused
};

struct StepResult {
  double served = 0.0;
  double dropped = 0.0;
  int next_live = 0;
  int turned_on = 0;
  int turned_off = 0;
  int transitions = 0;
  HibernateState state;
};

// One slot of the policy as a pure function of the previous state.
StepResult hibernate_step(const HibernateState& state, double load,
                          const HibernateParams& params, const ClusterConfig& cluster);

// In-place driver used by the simulations; hibernate_step wraps it.
class HibernatePolicy {
 public:
  HibernatePolicy(HibernateParams params, int m_total);
  HibernatePolicy(HibernateParams params, int m_total, HibernateState state);

  // Applies one slot and returns its outcome (state is not copied out).
  StepResult step(double load);

  const HibernateState& state() const { return state_; }

 private:
  HibernateParams params_;
  int m_total_;
  int spare_floor_;
  HibernateState state_;
};

struct HibernateRun {
  Schedule schedule;
  MetricsReport metrics;
};

// Starts with every server live. live[0] and live[1] are both M; the
// decision taken in the final slot falls outside the horizon and is not
// charged.
HibernateRun run_hibernate(const EnergyModel& model, const LoadTrace& trace,
                           const ClusterConfig& cluster, const HibernateParams& params);

struct SweepGrid {
  std::vector<double> kappas;
  std::vector<int> tau_slots;
  std::vector<double> lambda_caps;

  void validate() const;
  std::size_t points() const { return kappas.size() * tau_slots.size() * lambda_caps.size(); }
};

inline constexpr const char* kSystemRowId = "_system";

struct SweepRow {
  std::string cluster_id;  // kSystemRowId for the system-wide rows
  double kappa = 0.0;
  int tau_slots = 0;
  double lambda_cap = 0.0;
  MetricsReport metrics;
};

// Runs Hibernate for every (trace, grid point). The grid's lambda_cap
// overrides each cluster's own. Rows come back sorted by cluster id and then
// by grid position (kappa, tau, lambda in the order given), followed by one
// system-wide row per grid point. `workers` > 1 spreads the runs over
// threads without changing the output.
std::vector<SweepRow> sweep(const EnergyModel& model, std::span<const LoadTrace> traces,
                            std::span<const ClusterConfig> clusters, const SweepGrid& grid,
                            unsigned workers = 1);

}  // namespace cdnpower
