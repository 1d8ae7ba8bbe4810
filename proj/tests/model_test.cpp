#include <random>

#include "cdnpower/error.hpp"
#include "cdnpower/model.hpp"
#include "cdnpower/offline.hpp"
#include "doctest.h"
#include "oracle.hpp"

using namespace cdnpower;

namespace {

LoadTrace trace_of(std::vector<double> loads) {
  LoadTrace t;
  t.cluster_id = "c";
  t.loads = std::move(loads);
  return t;
}

}  // namespace

TEST_CASE("power follows the linear model") {
  const EnergyModel m;
  CHECK(power(m, 0.0) == 63.0);
  CHECK(power(m, 1.0) == 92.0);
  CHECK(power(m, 0.5) == 77.5);
  CHECK_THROWS_AS(power(m, -0.01), DomainError);
  CHECK_THROWS_AS(power(m, 1.01), DomainError);
}

TEST_CASE("energy model and cluster validation") {
  CHECK_NOTHROW(EnergyModel{}.validate());
  CHECK_THROWS_AS((EnergyModel{70, 60, 1, 1}.validate()), ValidationError);
  CHECK_THROWS_AS((EnergyModel{63, 92, -1, 300}.validate()), ValidationError);
  CHECK_THROWS_AS((EnergyModel{63, 92, 1, 0}.validate()), ValidationError);
  CHECK_THROWS_AS((ClusterConfig{"x", 0, 0.5}.validate()), ValidationError);
  CHECK_THROWS_AS((ClusterConfig{"x", 3, 0.0}.validate()), ValidationError);
  CHECK_THROWS_AS((ClusterConfig{"x", 3, 1.2}.validate()), ValidationError);
  CHECK_NOTHROW((ClusterConfig{"x", 3, 1.0}.validate()));
}

TEST_CASE("servers_required tolerates representation noise at the boundary") {
  CHECK(servers_required(0.0, 0.75) == 0);
  CHECK(servers_required(1.5, 0.75) == 2);
  CHECK(servers_required(0.6, 0.75) == 1);
  CHECK(servers_required(0.75 * 4, 0.75) == 4);
  CHECK(servers_required(0.1 * 700, 1.0) == 70);
  CHECK(servers_required(3.0000001, 0.75) == 5);
}

TEST_CASE("schedule_energy single-slot cases") {
  const EnergyModel m;
  auto tr = trace_of({0.5});
  CHECK(schedule_energy(m, tr, schedule_from_live(tr, {1, 1})).joules() == 23250.0);

  auto idle = trace_of({0.0});
  CHECK(schedule_energy(m, idle, schedule_from_live(idle, {1, 0})).joules() == 37000.0);
}

TEST_CASE("schedule_energy on the two-slot OPT instance matches the oracle") {
  const EnergyModel m;
  auto tr = trace_of({1.4, 0.2});
  const ClusterConfig c{"c", 2, 0.75};

  const auto best = oracle::brute_force({}, tr.loads, 2, 0.75);
  REQUIRE(best);
  // Frozen from the oracle: both slots need every server (1.4 > 0.75), and
  // dropping to one server at slot 2 saves 18,900 J of idle power but costs
  // 37,000 J to switch.
  CHECK(best->live == std::vector<int>{2, 2, 2});
  CHECK(best->energy == doctest::Approx(89520.0));

  const auto opt = solve_opt(m, tr, c);
  CHECK(opt.energy.joules() == 89520.0);
  CHECK(schedule_energy(m, tr, opt.schedule) == opt.energy);

  const auto report = compute_metrics(m, tr, opt.schedule, 2);
  CHECK(report.availability_pct == 100.0);
  CHECK(report.energy_reduction_pct == 0.0);
}

TEST_CASE("schedule_energy rejects inconsistent schedules") {
  const EnergyModel m;
  auto tr = trace_of({0.5, 0.5});
  Schedule s = schedule_from_live(tr, {1, 1, 1});
  s.served.pop_back();
  CHECK_THROWS_AS(schedule_energy(m, tr, s), StructuralError);

  Schedule over = schedule_from_live(tr, {1, 1, 1});
  over.served[0] = 0.4;  // served + dropped != load
  CHECK_THROWS_AS(schedule_energy(m, tr, over), StructuralError);

  auto heavy = trace_of({2.0});
  Schedule bad;
  bad.live = {1, 1};
  bad.served = {2.0};
  bad.dropped = {0.0};
  CHECK_THROWS_AS(schedule_energy(m, heavy, bad), StructuralError);

  CHECK_THROWS_AS(schedule_from_live(tr, {1, 1}), StructuralError);
}

TEST_CASE("shedding serves min(load, live) and an empty cluster costs nothing") {
  auto tr = trace_of({2.5, 0.4});
  const Schedule s = schedule_from_live(tr, {3, 2, 0});
  CHECK(s.served[0] == 2.0);
  CHECK(s.dropped[0] == 0.5);
  CHECK(s.served[1] == 0.0);
  CHECK(s.dropped[1] == 0.4);
  const EnergyModel m;
  CHECK(schedule_energy(m, tr, s).joules() == 300.0 * (2 * 63 + 29 * 2.0) + 3 * 37000.0);
}

TEST_CASE("baseline_energy") {
  const EnergyModel m;
  CHECK(baseline_energy(m, trace_of({0.0}), 2).joules() == 37800.0);
  CHECK(baseline_energy(m, trace_of({1.0}), 2).joules() == 46500.0);
  CHECK(baseline_energy(m, trace_of({0.5, 0.5}), 1).joules() == 46500.0);
  CHECK_THROWS_AS(baseline_energy(m, trace_of({2.5}), 2), DomainError);
}

TEST_CASE("compute_metrics") {
  const EnergyModel m;

  SUBCASE("baseline schedule is the zero point") {
    auto tr = trace_of({0.3, 1.2, 0.7, 0.0});
    const auto r = compute_metrics(m, tr, baseline_schedule(tr, 3), 3);
    CHECK(r.energy_reduction_pct == 0.0);
    CHECK(r.availability_pct == 100.0);
    CHECK(r.transitions_total == 0);
    CHECK(r.energy == r.baseline);
  }

  SUBCASE("one day, ten servers, ten transitions") {
    auto tr = trace_of(std::vector<double>(288, 0.1));
    std::vector<int> live(289, 10);
    for (int t = 100; t < 105; ++t) live[static_cast<std::size_t>(t)] = 9;  // 1 off, 1 on
    for (int t = 200; t < 289; ++t) live[static_cast<std::size_t>(t)] = 6;  // 4 off
    live[250] = 8;                                                     // 2 on, 2 off
    const Schedule s = schedule_from_live(tr, live);
    REQUIRE(s.transitions() == 10);
    const auto r = compute_metrics(m, tr, s, 10);
    CHECK(r.transitions_per_server_day == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("zero input load counts as fully available") {
    auto tr = trace_of({0.0, 0.0});
    const auto r = compute_metrics(m, tr, schedule_from_live(tr, {1, 0, 0}), 1);
    CHECK(r.availability_pct == 100.0);
  }

  SUBCASE("dropped load lowers availability") {
    auto tr = trace_of({1.0, 3.0});
    const auto r = compute_metrics(m, tr, schedule_from_live(tr, {4, 4, 2}), 4);
    CHECK(r.availability_pct == doctest::Approx(75.0));
  }
}

TEST_CASE("property: energy depends only on aggregate served load") {
  std::mt19937_64 rng(11);
  const EnergyModel m;
  const oracle::Constants c;
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = size(rng);
    const std::size_t n = static_cast<std::size_t>(size(rng));
    std::vector<double> loads(n);
    std::vector<int> live(n + 1, M);
    std::uniform_int_distribution<int> lc(0, M);
    for (std::size_t t = 0; t < n; ++t) {
      live[t + 1] = lc(rng);
      loads[t] = live[t + 1] * frac(rng);
    }
    auto tr = trace_of(loads);
    const Schedule s = schedule_from_live(tr, live);
    double explicit_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      explicit_sum += oracle::per_server_slot_energy(c, live[t + 1], s.served[t], rng);
    }
    explicit_sum += c.alpha * static_cast<double>(s.transitions());
    // Each slot term is rounded to the millijoule once.
    CHECK(std::abs(schedule_energy(m, tr, s).joules() - explicit_sum) <= 1e-3 * (n + 1));
  }
}

TEST_CASE("property: energy is additive over concatenated segments") {
  std::mt19937_64 rng(5);
  const EnergyModel m;
  std::uniform_real_distribution<double> load(0.0, 3.0);
  std::uniform_int_distribution<int> count(3, 6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> loads(12);
    std::vector<int> live(13, 6);
    for (std::size_t t = 0; t < 12; ++t) {
      live[t + 1] = count(rng);
      loads[t] = std::min(load(rng), static_cast<double>(live[t + 1]));
    }
    const std::size_t cut = 5;
    auto whole = trace_of(loads);
    auto head = trace_of({loads.begin(), loads.begin() + cut});
    auto tail = trace_of({loads.begin() + cut, loads.end()});
    std::vector<int> head_live(live.begin(), live.begin() + cut + 1);
    std::vector<int> tail_live(live.begin() + cut, live.end());  // shares boundary m_cut
    const Energy sum = schedule_energy(m, head, schedule_from_live(head, head_live)) +
                       schedule_energy(m, tail, schedule_from_live(tail, tail_live));
    CHECK(sum == schedule_energy(m, whole, schedule_from_live(whole, live)));
  }
}

TEST_CASE("aggregate sums before computing percentages") {
  MetricsReport a, b;
  a.energy = Energy::from_joules(50);
  a.baseline = Energy::from_joules(100);
  a.served_load = 9;
  a.dropped_load = 1;
  a.input_load = 10;
  a.server_days = 1;
  a.transitions_total = 2;
  b.energy = Energy::from_joules(300);
  b.baseline = Energy::from_joules(300);
  b.served_load = 90;
  b.input_load = 90;
  b.server_days = 3;
  b.transitions_total = 2;
  const MetricsReport reports[] = {a, b};
  const auto s = aggregate(reports);
  CHECK(s.energy_reduction_pct == doctest::Approx(12.5));
  CHECK(s.availability_pct == doctest::Approx(99.0));
  CHECK(s.transitions_per_server_day == doctest::Approx(1.0));
}
