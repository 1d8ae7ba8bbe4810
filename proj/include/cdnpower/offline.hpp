#pragma once

// Optimal offline schedulers.
//
// solve_opt fills E(t, m), the least energy that serves slots 1..t and ends
// with m live servers, starting from E(0, M) = 0. solve_opt_k adds a third
// index: the number of transitions the schedule may still have used.
//
// Both recurrences minimise E(t-1, m') + alpha * |m - m'| over m'. Because
// the transition term is linear in the distance, the minimum is computed with
// one left-to-right and one right-to-left running minimum instead of a scan
// over every m'. For OPT(k) the running minimum walks the diagonals
// (m' - 1, k - 1) of the budget plane. Energies are integer millijoules, so
// the result is identical to the plain scan.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cdnpower/energy.hpp"
#include "cdnpower/model.hpp"

namespace cdnpower {

struct DpOptions {
  // Live counts are restricted to multiples of `granularity`, plus M.
  // 1 gives the exact optimum; larger values trade optimality for a
  // smaller state space. Under OPT(k), a step between two adjacent grid
  // points is charged ceil(step / granularity) budget units of
  // `granularity` transitions, so returned schedules always respect k.
  int granularity = 1;
};

// The live counts the DP may use, ascending. Always contains 0 and M.
std::vector<int> live_count_grid(int m_total, int granularity);

// Smallest granularity whose grid has at most `max_states` points.
int granularity_for(int m_total, int max_states);

struct OfflineResult {
  Schedule schedule;
  Energy energy;
};

class DpTable {
 public:
  static constexpr std::int64_t kInfinite = INT64_MAX / 4;

  DpTable(std::vector<int> states, std::size_t slots, std::size_t budgets);

  std::span<const int> states() const { return states_; }
  std::size_t slots() const { return slots_; }
  std::size_t budgets() const { return budgets_; }

  bool reachable(std::size_t t, std::size_t state, std::size_t k = 0) const {
    return values_[index(t, state, k)] < kInfinite;
  }
  Energy value(std::size_t t, std::size_t state, std::size_t k = 0) const {
    return Energy::from_millijoules(values_[index(t, state, k)]);
  }
  // State index at t - 1 on the optimal path into (t, state, k); -1 at t = 0.
  int predecessor(std::size_t t, std::size_t state, std::size_t k = 0) const {
    return pred_[index(t, state, k)];
  }

  std::int64_t* row(std::size_t t) { return &values_[index(t, 0, 0)]; }
  std::int32_t* pred_row(std::size_t t) { return &pred_[index(t, 0, 0)]; }

 private:
  std::size_t index(std::size_t t, std::size_t state, std::size_t k) const {
    return (t * states_.size() + state) * budgets_ + k;
  }

  std::vector<int> states_;
  std::size_t slots_;
  std::size_t budgets_;
  std::vector<std::int64_t> values_;
  std::vector<std::int32_t> pred_;
};

// Throws InfeasibleTrace for the first slot with lambda_t > Lambda * M.
void check_offline_feasible(const LoadTrace& trace, const ClusterConfig& cluster);

DpTable build_opt_table(const EnergyModel& model, const LoadTrace& trace,
                        const ClusterConfig& cluster, const DpOptions& options = {});

OfflineResult solve_opt(const EnergyModel& model, const LoadTrace& trace,
                        const ClusterConfig& cluster, const DpOptions& options = {});

// One result for every k in 0..k_max. Keeps the full (n+1) x S x (K+1)
// table for reconstruction and refuses instances above ~64M entries.
std::map<std::int64_t, OfflineResult> solve_opt_k(const EnergyModel& model,
                                                  const LoadTrace& trace,
                                                  const ClusterConfig& cluster,
                                                  std::int64_t k_max,
                                                  const DpOptions& options = {});

// Optimal energies only, for each budget in `budgets`, using two rolling
// layers of the table. Memory is O(S * K); suitable for whole fleets.
std::vector<Energy> opt_k_energies(const EnergyModel& model, const LoadTrace& trace,
                                   const ClusterConfig& cluster,
                                   std::span<const std::int64_t> budgets,
                                   const DpOptions& options = {});

// Exhaustive search over every feasible live-count sequence in {0..M}^n.
// Ties go to the lexicographically smallest sequence. Refuses instances
// with (M + 1)^n > 1e7.
OfflineResult brute_force_opt(const EnergyModel& model, const LoadTrace& trace,
                              const ClusterConfig& cluster,
                              std::optional<std::int64_t> k_bound = std::nullopt);

}  // namespace cdnpower
