#include "cdnpower/offline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

#include "cdnpower/error.hpp"

namespace cdnpower {

namespace {

constexpr std::int64_t kInf = DpTable::kInfinite;
constexpr std::size_t kMaxTableEntries = std::size_t{1} << 26;

// Grid of admissible live counts plus the cost of moving between neighbours.
// step_cost[i] and step_units[i] describe the move between states i-1 and i.
struct Grid {
  std::vector<int> states;
  std::vector<std::int64_t> step_cost;   // mJ
  std::vector<std::int64_t> step_units;  // budget units
  std::vector<std::int64_t> position;    // cumulative budget units from state 0

  std::size_t size() const { return states.size(); }
  std::size_t top() const { return states.size() - 1; }
};

Grid make_grid(const EnergyModel& model, int m_total, int granularity) {
  Grid g;
  g.states = live_count_grid(m_total, granularity);
  const std::int64_t alpha_mj = transition_energy(model, 1).millijoules();
  g.step_cost.assign(g.size(), 0);
  g.step_units.assign(g.size(), 0);
  g.position.assign(g.size(), 0);
  for (std::size_t i = 1; i < g.size(); ++i) {
    const int gap = g.states[i] - g.states[i - 1];
    g.step_cost[i] = alpha_mj * gap;
    g.step_units[i] = (gap + granularity - 1) / granularity;
    g.position[i] = g.position[i - 1] + g.step_units[i];
  }
  return g;
}

void validate_inputs(const EnergyModel& model, const LoadTrace& trace,
                     const ClusterConfig& cluster, const DpOptions& options) {
  model.validate();
  cluster.validate();
  trace.validate();
  check_slot_length(model, trace);
  if (options.granularity < 1) {
    throw ValidationError(
        fmt::format("dp: granularity must be >= 1, got {}", options.granularity));
  }
  check_offline_feasible(trace, cluster);
}

// Slot energies of every grid state for one load; kInf where the state
// cannot serve the load.
void slot_row(const EnergyModel& model, const Grid& grid, double load, double lambda_cap,
              std::vector<std::int64_t>& out) {
  const int required = servers_required(load, lambda_cap);
  out.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i] = grid.states[i] < required
                 ? kInf
                 : slot_energy(model, grid.states[i], load).millijoules();
  }
}

// Scratch space for one OPT(k) stage. Layers are S x B, budget-major.
struct StageScratch {
  std::vector<std::int64_t> left, right;
  std::vector<std::int32_t> left_arg, right_arg;
  std::vector<std::int64_t> slot;
};

// Computes stage t of the OPT(k) table from stage t-1.
//
// left(i, k)  = min over j <= i of prev(j, k - (pos_i - pos_j)) + alpha (s_i - s_j)
// right(i, k) = min over j >= i of prev(j, k - (pos_j - pos_i)) + alpha (s_j - s_i)
//
// each obtained from its neighbour along the diagonal. Ties prefer the
// smaller predecessor live count. With `unbounded` set there is a single
// budget column and moves are free of budget.
template <bool kTrack>
void advance_stage(const Grid& grid, std::size_t budgets, bool unbounded, const std::int64_t* prev,
                   std::int64_t* cur, std::int32_t* cur_pred, StageScratch& s) {
  const std::size_t S = grid.size();
  const std::size_t B = budgets;
  s.left.resize(S * B);
  s.right.resize(S * B);
  if constexpr (kTrack) {
    s.left_arg.resize(S * B);
    s.right_arg.resize(S * B);
  }

  for (std::size_t i = 0; i < S; ++i) {
    std::int64_t* l = &s.left[i * B];
    const std::int64_t* p = &prev[i * B];
    std::copy(p, p + B, l);
    if constexpr (kTrack) std::fill_n(&s.left_arg[i * B], B, static_cast<std::int32_t>(i));
    if (i == 0) continue;
    const auto units = unbounded ? 0 : static_cast<std::size_t>(grid.step_units[i]);
    const std::int64_t cost = grid.step_cost[i];
    const std::int64_t* from = &s.left[(i - 1) * B];
    for (std::size_t k = units; k < B; ++k) {
      const std::int64_t via = from[k - units];
      if (via < kInf && via + cost <= l[k]) {
        l[k] = via + cost;
        if constexpr (kTrack) s.left_arg[i * B + k] = s.left_arg[(i - 1) * B + k - units];
      }
    }
  }

  for (std::size_t ii = S; ii-- > 0;) {
    std::int64_t* r = &s.right[ii * B];
    const std::int64_t* p = &prev[ii * B];
    std::copy(p, p + B, r);
    if constexpr (kTrack) std::fill_n(&s.right_arg[ii * B], B, static_cast<std::int32_t>(ii));
    if (ii + 1 == S) continue;
    const auto units = unbounded ? 0 : static_cast<std::size_t>(grid.step_units[ii + 1]);
    const std::int64_t cost = grid.step_cost[ii + 1];
    const std::int64_t* from = &s.right[(ii + 1) * B];
    for (std::size_t k = units; k < B; ++k) {
      const std::int64_t via = from[k - units];
      if (via < kInf && via + cost < r[k]) {
        r[k] = via + cost;
        if constexpr (kTrack) s.right_arg[ii * B + k] = s.right_arg[(ii + 1) * B + k - units];
      }
    }
  }

  for (std::size_t i = 0; i < S; ++i) {
    const std::int64_t slot = s.slot[i];
    std::int64_t* c = &cur[i * B];
    const std::int64_t* l = &s.left[i * B];
    const std::int64_t* r = &s.right[i * B];
    if (slot >= kInf) {
      std::fill_n(c, B, kInf);
      if constexpr (kTrack) std::fill_n(&cur_pred[i * B], B, -1);
      continue;
    }
    for (std::size_t k = 0; k < B; ++k) {
      const bool take_right = r[k] < l[k];
      const std::int64_t best = take_right ? r[k] : l[k];
      c[k] = best < kInf ? best + slot : kInf;
      if constexpr (kTrack) {
        cur_pred[i * B + k] =
            best < kInf ? (take_right ? s.right_arg[i * B + k] : s.left_arg[i * B + k]) : -1;
      }
    }
  }
}

// Index of the cheapest reachable state in a stage column at budget k.
std::size_t argmin_state(const std::int64_t* layer, std::size_t S, std::size_t B, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < S; ++i) {
    if (layer[i * B + k] < layer[best * B + k]) best = i;
  }
  return best;
}

std::size_t budget_units(std::int64_t k, int granularity) {
  return static_cast<std::size_t>(k / granularity);
}

}  // namespace

std::vector<int> live_count_grid(int m_total, int granularity) {
  if (m_total < 1 || granularity < 1) {
    throw ValidationError(
        fmt::format("live-count grid needs M >= 1 and g >= 1, got M={} g={}", m_total, granularity));
  }
  std::vector<int> states;
  for (int m = 0; m < m_total; m += granularity) states.push_back(m);
  states.push_back(m_total);
  return states;
}

int granularity_for(int m_total, int max_states) {
  if (max_states < 2) {
    throw ValidationError("granularity_for: max_states must be >= 2");
  }
  int g = std::max(1, m_total / max_states);
  while (static_cast<int>(live_count_grid(m_total, g).size()) > max_states) ++g;
  return g;
}

DpTable::DpTable(std::vector<int> states, std::size_t slots, std::size_t budgets)
    : states_(std::move(states)), slots_(slots), budgets_(budgets) {
  const std::size_t entries = (slots_ + 1) * states_.size() * budgets_;
  values_.assign(entries, kInfinite);
  pred_.assign(entries, -1);
}

void check_offline_feasible(const LoadTrace& trace, const ClusterConfig& cluster) {
  for (std::size_t t = 0; t < trace.size(); ++t) {
    if (!can_serve(trace.loads[t], cluster.m_total, cluster.lambda_cap)) {
      throw InfeasibleTrace(
          t + 1, fmt::format("cluster {}: load {} at slot {} exceeds Lambda*M = {}*{}",
                             cluster.id, trace.loads[t], t + 1, cluster.lambda_cap,
                             cluster.m_total));
    }
  }
}

DpTable build_opt_table(const EnergyModel& model, const LoadTrace& trace,
                        const ClusterConfig& cluster, const DpOptions& options) {
  validate_inputs(model, trace, cluster, options);
  const Grid grid = make_grid(model, cluster.m_total, options.granularity);
  const std::size_t n = trace.size();
  if ((n + 1) * grid.size() > kMaxTableEntries) {
    throw DomainError(fmt::format("opt: table of {} x {} entries is too large; raise granularity",
                                  n + 1, grid.size()));
  }

  DpTable table(grid.states, n, 1);
  table.row(0)[grid.top()] = 0;

  StageScratch scratch;
  for (std::size_t t = 1; t <= n; ++t) {
    slot_row(model, grid, trace.loads[t - 1], cluster.lambda_cap, scratch.slot);
    advance_stage<true>(grid, 1, true, table.row(t - 1), table.row(t), table.pred_row(t), scratch);
  }
  return table;
}

OfflineResult solve_opt(const EnergyModel& model, const LoadTrace& trace,
                        const ClusterConfig& cluster, const DpOptions& options) {
  DpTable table = build_opt_table(model, trace, cluster, options);
  const std::size_t n = trace.size();
  const std::size_t S = table.states().size();

  std::size_t state = argmin_state(table.row(n), S, 1, 0);
  const Energy energy = table.value(n, state);

  std::vector<int> live(n + 1);
  for (std::size_t t = n; t > 0; --t) {
    live[t] = table.states()[state];
    state = static_cast<std::size_t>(table.predecessor(t, state));
  }
  live[0] = table.states()[state];
  return {schedule_from_live(trace, std::move(live)), energy};
}

std::map<std::int64_t, OfflineResult> solve_opt_k(const EnergyModel& model,
                                                  const LoadTrace& trace,
                                                  const ClusterConfig& cluster,
                                                  std::int64_t k_max,
                                                  const DpOptions& options) {
  validate_inputs(model, trace, cluster, options);
  if (k_max < 0) throw ValidationError("opt-k: k_max must be >= 0");

  const Grid grid = make_grid(model, cluster.m_total, options.granularity);
  const std::size_t n = trace.size();
  const std::size_t S = grid.size();
  const std::size_t B = budget_units(k_max, options.granularity) + 1;
  if ((n + 1) * S * B > kMaxTableEntries) {
    throw DomainError(fmt::format(
        "opt-k: table of {} x {} x {} entries is too large; use opt_k_energies or coarsen",
        n + 1, S, B));
  }

  DpTable table(grid.states, n, B);
  std::fill_n(table.row(0) + grid.top() * B, B, 0);

  StageScratch scratch;
  for (std::size_t t = 1; t <= n; ++t) {
    slot_row(model, grid, trace.loads[t - 1], cluster.lambda_cap, scratch.slot);
    advance_stage<true>(grid, B, false, table.row(t - 1), table.row(t), table.pred_row(t), scratch);
  }

  std::map<std::int64_t, OfflineResult> results;
  for (std::int64_t k = 0; k <= k_max; ++k) {
    std::size_t units = budget_units(k, options.granularity);
    std::size_t state = argmin_state(table.row(n), S, B, units);
    const Energy energy = table.value(n, state, units);

    std::vector<int> live(n + 1);
    for (std::size_t t = n; t > 0; --t) {
      live[t] = grid.states[state];
      const auto from = static_cast<std::size_t>(table.predecessor(t, state, units));
      units -= static_cast<std::size_t>(std::abs(grid.position[state] - grid.position[from]));
      state = from;
    }
    live[0] = grid.states[state];
    results.emplace(k, OfflineResult{schedule_from_live(trace, std::move(live)), energy});
  }
  return results;
}

std::vector<Energy> opt_k_energies(const EnergyModel& model, const LoadTrace& trace,
                                   const ClusterConfig& cluster,
                                   std::span<const std::int64_t> budgets,
                                   const DpOptions& options) {
  validate_inputs(model, trace, cluster, options);
  if (budgets.empty()) return {};
  const std::int64_t k_max = *std::max_element(budgets.begin(), budgets.end());
  if (*std::min_element(budgets.begin(), budgets.end()) < 0) {
    throw ValidationError("opt-k: budgets must be >= 0");
  }

  const Grid grid = make_grid(model, cluster.m_total, options.granularity);
  const std::size_t S = grid.size();
  const std::size_t B = budget_units(k_max, options.granularity) + 1;

  std::vector<std::int64_t> prev(S * B, kInf), cur(S * B, kInf);
  std::fill_n(prev.begin() + static_cast<std::ptrdiff_t>(grid.top() * B), B, 0);

  StageScratch scratch;
  for (double load : trace.loads) {
    slot_row(model, grid, load, cluster.lambda_cap, scratch.slot);
    advance_stage<false>(grid, B, false, prev.data(), cur.data(), nullptr, scratch);
    prev.swap(cur);
  }

  std::vector<Energy> out;
  out.reserve(budgets.size());
  for (std::int64_t k : budgets) {
    const std::size_t units = budget_units(k, options.granularity);
    const std::size_t state = argmin_state(prev.data(), S, B, units);
    out.push_back(Energy::from_millijoules(prev[state * B + units]));
  }
  return out;
}

OfflineResult brute_force_opt(const EnergyModel& model, const LoadTrace& trace,
                              const ClusterConfig& cluster, std::optional<std::int64_t> k_bound) {
  validate_inputs(model, trace, cluster, DpOptions{});
  const int M = cluster.m_total;
  const std::size_t n = trace.size();

  double combos = 1.0;
  for (std::size_t t = 0; t < n; ++t) combos *= M + 1;
  if (combos > 1e7) {
    throw RefusalError(
        fmt::format("brute force: (M+1)^n = {}^{} exceeds 1e7 sequences", M + 1, n));
  }

  std::vector<int> required(n);
  for (std::size_t t = 0; t < n; ++t) {
    required[t] = servers_required(trace.loads[t], cluster.lambda_cap);
  }

  std::vector<int> seq(n + 1, M);
  std::vector<int> best_seq;
  std::optional<Energy> best;

  // Depth-first in lexicographic order; strict improvement keeps the first
  // (smallest) sequence among equal energies.
  auto visit = [&](auto&& self, std::size_t t) -> void {
    if (t > n) {
      const std::int64_t transitions = count_transitions(seq);
      if (k_bound && transitions > *k_bound) return;
      Energy e;
      for (std::size_t s = 1; s <= n; ++s) e += slot_energy(model, seq[s], trace.loads[s - 1]);
      e += transition_energy(model, transitions);
      if (!best || e < *best) {
        best = e;
        best_seq = seq;
      }
      return;
    }
    for (int m = required[t - 1]; m <= M; ++m) {
      seq[t] = m;
      self(self, t + 1);
    }
  };
  visit(visit, 1);

  if (!best) {
    // Unreachable for k >= 0: all M servers live throughout is always admissible.
    throw DomainError("brute force: no admissible schedule");
  }
  return {schedule_from_live(trace, std::move(best_seq)), *best};
}

}  // namespace cdnpower
