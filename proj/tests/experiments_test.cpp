#include <filesystem>

#include "cdnpower/error.hpp"
#include "cdnpower/experiments.hpp"
#include "doctest.h"

using namespace cdnpower;

namespace {

FlashRow flash(double rho, double kappa, double availability) {
  FlashRow r{rho, kappa, {}};
  r.system.availability_pct = availability;
  return r;
}

FleetSpec small_fleet() {
  FleetSpec s;
  s.clusters = 4;
  s.days = 3;
  s.m_min = 40;
  s.m_max = 120;
  return s;
}

}  // namespace

TEST_CASE("synthetic fleet is deterministic and stays feasible") {
  const auto a = synth_fleet(small_fleet(), 9);
  const auto b = synth_fleet(small_fleet(), 9);
  const auto c = synth_fleet(small_fleet(), 10);
  REQUIRE(a.traces.size() == 4);
  CHECK(a.traces[0].loads == b.traces[0].loads);
  CHECK(a.traces[0].loads != c.traces[0].loads);
  CHECK(a.clusters[3].id == "c03");
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    const auto& cfg = a.clusters[i];
    CHECK(cfg.m_total >= 40);
    CHECK(cfg.m_total <= 120);
    CHECK(a.params[i].amp_frac <= a.params[i].base_frac);
    for (double l : a.traces[i].loads) CHECK(l <= cfg.lambda_cap * cfg.m_total);
  }
  const auto sum = system_trace(a);
  CHECK(sum.loads[5] == doctest::Approx(a.traces[0].loads[5] + a.traces[1].loads[5] +
                                        a.traces[2].loads[5] + a.traces[3].loads[5]));
}

TEST_CASE("fleet spec rejects infeasible shapes") {
  auto s = small_fleet();
  s.base_max = 0.7;
  CHECK_THROWS_AS(synth_fleet(s, 1), ValidationError);
  s = small_fleet();
  s.m_min = 500;
  CHECK_THROWS_AS(synth_fleet(s, 1), ValidationError);
  s = small_fleet();
  s.clusters = 0;
  CHECK_THROWS_AS(synth_fleet(s, 1), ValidationError);
}

TEST_CASE("kappa frontier picks the smallest sufficient kappa per rate") {
  const std::vector<FlashRow> rows{flash(0.05, 0.0, 99.9), flash(0.05, 0.05, 99.9995),
                                   flash(0.05, 0.1, 100), flash(0.2, 0.0, 99.0),
                                   flash(0.2, 0.05, 99.99), flash(0.2, 0.1, 99.99)};
  const auto f = kappa_frontier(rows, 99.999);
  REQUIRE(f.size() == 2);
  CHECK(f[0].rho == 0.05);
  CHECK(f[0].min_kappa == 0.05);
  CHECK(f[1].rho == 0.2);
  CHECK_FALSE(f[1].min_kappa.has_value());
}

TEST_CASE("default kappa grid") {
  const auto grid = FlashSpec{}.kappa_grid();
  REQUIRE(grid.size() == 17);
  CHECK(grid.front() == 0.0);
  CHECK(grid[3] == 0.075);
  CHECK(grid.back() == 0.4);
}

TEST_CASE("glb pairs are anti-correlated and merging conserves load") {
  GlbSpec spec;
  spec.sets = {{"m", 2}};
  spec.days = 6;
  spec.copies = 2;
  const auto fleet = synth_glb_fleet(spec, 4);
  REQUIRE(fleet.sets.size() == 1);
  const auto& set = fleet.sets[0];
  REQUIRE(set.traces.size() == 2);
  CHECK(set.members[0].m_total == set.members[1].m_total);
  // Inverted noise cancels, so the pair sums to twice the sinusoid.
  const auto& a = set.traces[0].loads;
  const auto& b = set.traces[1].loads;
  for (std::size_t t = 0; t + 1 < a.size(); t += 97) {
    CHECK(a[t] + b[t] == doctest::Approx(a[t + 1] + b[t + 1]).epsilon(0.05));
  }

  const auto rows = run_glb(EnergyModel{}, fleet, spec, 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].virtual_clusters == 4);
  CHECK(rows[0].merged.input_load == doctest::Approx(rows[0].separate.input_load));
  CHECK(rows[0].merged.baseline == rows[0].separate.baseline);
  CHECK(rows[0].merged.availability_pct >= rows[0].separate_max_availability_pct);
}

TEST_CASE("bounded run rejects negative rates") {
  const auto fleet = synth_fleet(small_fleet(), 2);
  CHECK_THROWS_AS(run_bounded(EnergyModel{}, fleet, {-1.0}, 20, 1), ValidationError);
  const auto r = run_bounded(EnergyModel{}, fleet, {0.0, 1.0, 50.0}, 20, 1);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].system_reduction_pct == 0.0);
  CHECK(r.rows[2].system_reduction_pct == doctest::Approx(r.unbounded_system_pct));
}
