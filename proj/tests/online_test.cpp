#include <random>

#include "cdnpower/error.hpp"
#include "cdnpower/offline.hpp"
#include "cdnpower/online.hpp"
#include "cdnpower/workload.hpp"
#include "doctest.h"

using namespace cdnpower;
using namespace std::chrono_literals;

namespace {

LoadTrace trace_of(std::vector<double> loads) {
  LoadTrace t;
  t.cluster_id = "c";
  t.loads = std::move(loads);
  return t;
}

const EnergyModel kModel;

LoadTrace diurnal(std::uint64_t seed, int m_total, int days = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DiurnalParams p;
  p.cluster_id = "d" + std::to_string(seed);
  p.days = days;
  p.m_total = m_total;
  p.base_frac = 0.2 + 0.15 * u(rng);
  p.amp_frac = 0.05 + 0.1 * u(rng);
  p.noise_frac = 0.01 + 0.04 * u(rng);
  return synth_diurnal(p, seed);
}

}  // namespace

TEST_CASE("tau converts wall-clock thresholds to slots") {
  CHECK(tau_to_slots(2h, 300) == 24);
  CHECK(tau_to_slots(30min, 300) == 6);
  CHECK(tau_to_slots(0s, 300) == 0);
  CHECK(tau_to_slots(301s, 300) == 2);
  CHECK_THROWS_AS(tau_to_slots(-1s, 300), ValidationError);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS((HibernateParams{1.5, 0, 0.75}.validate()), ValidationError);
  CHECK_THROWS_AS((HibernateParams{0.1, -1, 0.75}.validate()), ValidationError);
  CHECK_THROWS_AS((HibernateParams{0.1, 1, 0.0}.validate()), ValidationError);
  CHECK_THROWS_AS(hibernate_step(HibernateState::all_live(2), -0.1, {}, {"c", 2, 0.75}),
                  DomainError);
}

TEST_CASE("hibernate_step examples") {
  const ClusterConfig c{"c", 10, 0.75};

  SUBCASE("tau = 0 turns off every spare at once") {
    const auto r = hibernate_step(HibernateState::all_live(10), 1.5, {0.0, 0, 0.75}, c);
    CHECK(r.served == 1.5);
    CHECK(r.dropped == 0.0);
    CHECK(r.turned_off == 8);
    CHECK(r.turned_on == 0);
    CHECK(r.next_live == 2);
    CHECK(r.transitions == 8);
    CHECK(r.state.live_count() == 2);
  }

  SUBCASE("spare capacity rule tops up a short pool") {
    const HibernateState s(2, std::vector<int>(10, 0));
    const auto r = hibernate_step(s, 1.5, {0.1, 5, 0.75}, c);
    CHECK(r.dropped == 0.0);
    CHECK(r.turned_on == 1);
    CHECK(r.next_live == 3);
    CHECK(r.state.spare_streaks().size() == 3);
    CHECK(r.state.spare_streaks()[2] == 0);
  }

  SUBCASE("overload drops the excess and recovers in one slot") {
    const HibernateState s(1, std::vector<int>(10, 0));
    const auto r = hibernate_step(s, 3.0, {0.1, 5, 0.75}, c);
    CHECK(r.served == 1.0);
    CHECK(r.dropped == 2.0);
    // required 4, one live: 3 for the shortfall plus the spare floor of 1.
    CHECK(r.turned_on == 4);
    CHECK(r.next_live == 5);
  }

  SUBCASE("turn-on is capped at M") {
    const HibernateState s(9, std::vector<int>(10, 0));
    const auto r = hibernate_step(s, 7.0, {0.5, 5, 0.75}, c);
    CHECK(r.next_live == 10);
    CHECK(r.turned_on == 1);
  }
}

TEST_CASE("five slots of constant load, step by step") {
  // Hand-simulated: servers 2..4 are spare from slot 1, reach a streak of 2
  // in slot 2 and leave at slot 3.
  const ClusterConfig c{"c", 4, 0.75};
  const HibernateParams p{0.0, 2, 0.75};
  HibernatePolicy policy(p, 4);
  const int expected_next[] = {4, 1, 1, 1, 1};
  const int expected_off[] = {0, 3, 0, 0, 0};
  const std::vector<std::vector<int>> expected_streaks = {
      {0, 1, 1, 1}, {0}, {0}, {0}, {0}};
  for (int t = 0; t < 5; ++t) {
    const auto r = policy.step(0.6);
    CHECK(r.next_live == expected_next[t]);
    CHECK(r.turned_off == expected_off[t]);
    const auto streaks = policy.state().spare_streaks();
    CHECK(std::vector<int>(streaks.begin(), streaks.end()) == expected_streaks[t]);
  }

  const auto run = run_hibernate(kModel, trace_of(std::vector<double>(5, 0.6)), c, p);
  CHECK(run.schedule.live == std::vector<int>{4, 4, 4, 1, 1, 1});
  CHECK(run.metrics.transitions_total == 3);
  CHECK(run.metrics.energy.joules() == 345000.0);
  CHECK(run.metrics.baseline.joules() == 404100.0);
  CHECK(run.metrics.availability_pct == 100.0);
}

TEST_CASE("run_hibernate on idle clusters") {
  SUBCASE("no spare floor drains the cluster") {
    const auto run = run_hibernate(kModel, trace_of({0, 0, 0, 0}), {"c", 2, 0.75}, {0.0, 1, 0.75});
    CHECK(run.schedule.live == std::vector<int>{2, 2, 0, 0, 0});
    CHECK(run.metrics.availability_pct == 100.0);
    CHECK(run.metrics.energy.joules() == 111800.0);
  }

  SUBCASE("a spare floor keeps one server live") {
    const auto run = run_hibernate(kModel, trace_of({0, 0, 0, 0}), {"c", 2, 0.75}, {0.5, 1, 0.75});
    CHECK(run.schedule.live == std::vector<int>{2, 2, 1, 1, 1});
    CHECK(run.metrics.energy.joules() == 131500.0);
    CHECK(run.metrics.energy_reduction_pct < 50.0);
  }
}

TEST_CASE("run_hibernate on the square wave") {
  const auto tr = trace_of({2.9, 2.9, 0.3, 0.3, 2.9, 2.9});
  const ClusterConfig c{"c", 4, 0.75};
  const auto opt = solve_opt(kModel, tr, c);
  for (int tau : {0, 1, 2, 4}) {
    const auto run = run_hibernate(kModel, tr, c, {0.0, tau, 0.75});
    if (run.metrics.availability_pct == 100.0) CHECK(run.metrics.energy >= opt.energy);
  }
  // tau = 1: three servers sleep after slot 3 and are woken by the overload
  // in slot 5, which drops 1.9.
  const auto run = run_hibernate(kModel, tr, c, {0.0, 1, 0.75});
  CHECK(run.schedule.live == std::vector<int>{4, 4, 4, 4, 1, 1, 4});
  CHECK(run.metrics.transitions_total == 6);
  CHECK(run.schedule.dropped[4] == doctest::Approx(1.9));
  CHECK(run.metrics.availability_pct == doctest::Approx(100.0 * 10.3 / 12.2));
}

TEST_CASE("property: invariants over random diurnal traces") {
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const int M = 20 + static_cast<int>(seed * 7 % 60);
    const auto tr = diurnal(seed, M);
    const ClusterConfig c{tr.cluster_id, M, 0.75};

    SUBCASE("kappa = 1 never turns anything off") {
      const auto run = run_hibernate(kModel, tr, c, {1.0, 0, 0.75});
      CHECK(run.metrics.transitions_total == 0);
      CHECK(run.metrics.availability_pct == 100.0);
    }

    SUBCASE("capacity safety and required capacity") {
      const HibernateParams p{0.1, 3, 0.75};
      HibernatePolicy policy(p, M);
      const int floor = servers_required(0.1 * M, 1.0);
      bool smooth_before = false;
      for (std::size_t t = 0; t < tr.size(); ++t) {
        const auto r = policy.step(tr.loads[t]);
        CHECK(r.next_live >= 0);
        CHECK(r.next_live <= M);
        CHECK(r.served + r.dropped == doctest::Approx(tr.loads[t]));
        // The spare floor absorbs any rise smaller than Lambda * floor.
        if (smooth_before) CHECK(r.dropped == 0.0);
        smooth_before = t + 1 < tr.size() &&
                        tr.loads[t + 1] - tr.loads[t] < 0.75 * floor &&
                        tr.loads[t + 1] <= 0.75 * M;
      }
    }

    SUBCASE("dropped load non-increasing in kappa, transitions in tau") {
      const double kappas[] = {0.0, 0.05, 0.1, 0.2, 0.4};
      const int taus[] = {0, 1, 6, 12, 24, 48};
      for (int tau : taus) {
        double prev_dropped = 1e300;
        for (double k : kappas) {
          const auto run = run_hibernate(kModel, tr, c, {k, tau, 0.75});
          double dropped = 0;
          for (double d : run.schedule.dropped) dropped += d;
          CHECK(dropped <= prev_dropped + 1e-9);
          prev_dropped = dropped;
        }
      }
      for (double k : kappas) {
        std::int64_t prev = INT64_MAX;
        for (int tau : taus) {
          const auto run = run_hibernate(kModel, tr, c, {k, tau, 0.75});
          CHECK(run.metrics.transitions_total <= prev);
          prev = run.metrics.transitions_total;
        }
      }
    }

    SUBCASE("offline dominance") {
      const auto opt = solve_opt(kModel, tr, c);
      for (double k : {0.0, 0.1}) {
        for (int tau : {0, 6, 24}) {
          const auto run = run_hibernate(kModel, tr, c, {k, tau, 0.75});
          if (run.metrics.availability_pct == 100.0) CHECK(run.metrics.energy >= opt.energy);
        }
      }
    }

    SUBCASE("availability with kappa = 0.1 at least that with kappa = 0") {
      for (int tau : {0, 6, 12, 24}) {
        const auto a0 = run_hibernate(kModel, tr, c, {0.0, tau, 0.75}).metrics.availability_pct;
        const auto a1 = run_hibernate(kModel, tr, c, {0.1, tau, 0.75}).metrics.availability_pct;
        CHECK(a1 >= a0);
      }
    }
  }
}

TEST_CASE("sweep") {
  const auto a = diurnal(101, 40);

  SUBCASE("a single point reproduces run_hibernate") {
    const ClusterConfig c{a.cluster_id, 40, 0.75};
    const std::vector<LoadTrace> traces = {a};
    const std::vector<ClusterConfig> configs = {c};
    const auto rows = sweep(kModel, traces, configs, {{0.1}, {6}, {0.75}});
    REQUIRE(rows.size() == 2);
    const auto direct = run_hibernate(kModel, a, c, {0.1, 6, 0.75}).metrics;
    CHECK(rows[0].cluster_id == a.cluster_id);
    CHECK(rows[0].metrics.energy == direct.energy);
    CHECK(rows[0].metrics.availability_pct == direct.availability_pct);
    CHECK(rows[1].cluster_id == kSystemRowId);
    CHECK(rows[1].metrics.energy == direct.energy);
  }

  SUBCASE("two identical clusters give the per-cluster reduction system-wide") {
    auto b = a;
    b.cluster_id = "twin";
    const std::vector<LoadTrace> traces = {b, a};
    const std::vector<ClusterConfig> configs = {{a.cluster_id, 40, 0.75}, {"twin", 40, 0.75}};
    const auto rows = sweep(kModel, traces, configs, {{0.0, 0.1}, {0, 12}, {0.75}}, 3);
    REQUIRE(rows.size() == 2 * 4 + 4);
    CHECK(rows[0].cluster_id == a.cluster_id);
    CHECK(rows[4].cluster_id == "twin");
    for (std::size_t p = 0; p < 4; ++p) {
      const auto& sys = rows[8 + p];
      CHECK(sys.cluster_id == kSystemRowId);
      CHECK(sys.metrics.energy_reduction_pct ==
            doctest::Approx(rows[p].metrics.energy_reduction_pct).epsilon(1e-12));
      CHECK(sys.metrics.energy == rows[p].metrics.energy + rows[4 + p].metrics.energy);
    }
    CHECK(rows[1].kappa == 0.0);
    CHECK(rows[1].tau_slots == 12);
    CHECK(rows[2].kappa == 0.1);
  }

  SUBCASE("worker count does not change the output") {
    std::vector<LoadTrace> traces;
    std::vector<ClusterConfig> configs;
    for (std::uint64_t s = 200; s < 206; ++s) {
      traces.push_back(diurnal(s, 30));
      configs.push_back({traces.back().cluster_id, 30, 0.75});
    }
    const SweepGrid g{{0.0, 0.1}, {0, 6, 24}, {0.6, 0.75}};
    const auto one = sweep(kModel, traces, configs, g, 1);
    const auto many = sweep(kModel, traces, configs, g, 8);
    REQUIRE(one.size() == many.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(one[i].cluster_id == many[i].cluster_id);
      CHECK(one[i].metrics.energy == many[i].metrics.energy);
      CHECK(one[i].metrics.transitions_total == many[i].metrics.transitions_total);
    }
  }

  SUBCASE("bad grids and unknown clusters are rejected") {
    const std::vector<LoadTrace> traces = {a};
    const std::vector<ClusterConfig> none;
    CHECK_THROWS_AS(sweep(kModel, traces, none, {{0.1}, {6}, {0.75}}), ValidationError);
    const std::vector<ClusterConfig> configs = {{a.cluster_id, 40, 0.75}};
    CHECK_THROWS_AS(sweep(kModel, traces, configs, {{}, {6}, {0.75}}), ValidationError);
  }
}
