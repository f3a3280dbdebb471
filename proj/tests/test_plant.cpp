#include <random>

#include "catch_amalgamated.hpp"

#include "h2ems/params.hpp"
#include "h2ems/plant.hpp"

using namespace h2ems;

namespace {

// Independent reference: pour the amount in 1e-4 kg sips, each into the
// lowest uncapped tank.
std::vector<double> oracle_fill(std::vector<double> m, const std::vector<double>& caps,
                                double amount, double delta = 1e-4) {
  double rem = amount;
  while (rem > 0) {
    int best = -1;
    for (size_t i = 0; i < m.size(); ++i)
      if (m[i] < caps[i] - 1e-12 && (best < 0 || m[i] < m[static_cast<size_t>(best)]))
        best = static_cast<int>(i);
    if (best < 0) break;
    const size_t b = static_cast<size_t>(best);
    const double add = std::min({delta, rem, caps[b] - m[b]});
    m[b] += add;
    rem -= add;
  }
  return m;
}

PlantState state_with(double m_lp, std::vector<double> mp) {
  PlantState s;
  s.m_lp = m_lp;
  s.mp = std::move(mp);
  return s;
}

PlantParams fueling_params() {
  PlantParams p;
  p.m_350_override = 33.70;
  return p;
}

}  // namespace

TEST_CASE("fill_section equalizes progressively") {
  const std::vector<double> caps(3, 43.33);

  auto r = fill_section({10, 20, 30}, caps, 25.0);
  CHECK(r.masses[0] == Catch::Approx(27.5));
  CHECK(r.masses[1] == Catch::Approx(27.5));
  CHECK(r.masses[2] == Catch::Approx(30.0));
  CHECK(r.filled_kg == Catch::Approx(25.0));

  r = fill_section({10, 20, 30}, caps, 45.0);
  for (double m : r.masses) CHECK(m == Catch::Approx(35.0));
  CHECK(r.filled_kg == Catch::Approx(45.0));

  r = fill_section({43.33, 43.33, 43.33}, caps, 5.0);
  CHECK(r.filled_kg == 0.0);
  CHECK(r.masses == std::vector<double>{43.33, 43.33, 43.33});
}

TEST_CASE("fill_section stops at caps and reports the absorbed mass") {
  const std::vector<double> caps{12.0, 12.0, 12.0};
  auto r = fill_section({10, 11, 11.5}, caps, 50.0);
  for (double m : r.masses) CHECK(m == Catch::Approx(12.0));
  CHECK(r.filled_kg == Catch::Approx(3.5));

  // partial absorption means every tank finished at its cap
  for (size_t i = 0; i < r.masses.size(); ++i) CHECK(r.masses[i] == Catch::Approx(caps[i]));
}

TEST_CASE("fill_section rejects bad inputs") {
  CHECK_THROWS_AS(fill_section({1, 2}, {10}, 1.0), Error);
  CHECK_THROWS_AS(fill_section({1, 2}, {10, 10}, -1.0), Error);
  CHECK_THROWS_AS(fill_section({11, 2}, {10, 10}, 1.0), Error);
}

TEST_CASE("fill_section matches the incremental oracle on random sections") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> ucap(20.0, 50.0), ufrac(0.0, 1.0), uamt(0.0, 40.0);
  for (int k = 0; k < 60; ++k) {
    const size_t n = 2 + static_cast<size_t>(rng() % 3);
    std::vector<double> caps(n), masses(n);
    for (size_t i = 0; i < n; ++i) {
      caps[i] = ucap(rng);
      masses[i] = ufrac(rng) * caps[i];
    }
    const double amount = uamt(rng);
    auto got = fill_section(masses, caps, amount);
    auto want = oracle_fill(masses, caps, amount);
    double total = 0;
    for (size_t i = 0; i < n; ++i) {
      INFO("case " << k << " tank " << i);
      CHECK(got.masses[i] == Catch::Approx(want[i]).margin(1e-3));
      CHECK(got.masses[i] >= masses[i] - 1e-12);  // monotone
      total += got.masses[i] - masses[i];
    }
    CHECK(got.filled_kg == Catch::Approx(total).margin(1e-12));
  }
}

TEST_CASE("pressure_recovery moves mass from the lighter into the heavier section") {
  PlantParams p;  // mdot_pr_nominal 18 kg/h
  auto s = state_with(5.0, {33, 32, 31, 20, 20, 20});

  auto r = pressure_recovery(s, 0.25, p);  // want 4.5 kg
  CHECK(r.moved_kg == Catch::Approx(4.5));
  CHECK(r.state.mp[3] == Catch::Approx(15.5));  // lowest donor index drained first
  CHECK(r.state.mp[4] == Catch::Approx(20.0));
  CHECK(r.state.mp[5] == Catch::Approx(20.0));
  CHECK(r.state.mp[0] == Catch::Approx(33.5));
  CHECK(r.state.mp[1] == Catch::Approx(33.5));
  CHECK(r.state.mp[2] == Catch::Approx(33.5));
  CHECK(r.state.mp_total() == Catch::Approx(s.mp_total()));
}

TEST_CASE("pressure_recovery edge cases") {
  PlantParams p;

  SECTION("equal sections: no-op") {
    auto s = state_with(5.0, {30, 31, 32, 32, 31, 30});
    auto r = pressure_recovery(s, 1.0, p);
    CHECK(r.moved_kg == 0.0);
    CHECK(r.state.mp == s.mp);
  }
  SECTION("donor at the per-tank floor: no-op") {
    auto s = state_with(5.0, {40, 40, 40, 10, 10, 10});
    auto r = pressure_recovery(s, 1.0, p);
    CHECK(r.moved_kg == 0.0);
    CHECK(r.state.mp == s.mp);
  }
  SECTION("floor tanks are skipped, not a stopping point") {
    // lowest donor tank sits at the floor; mass must still flow from the rest
    auto s = state_with(5.0, {40, 40, 40, 10, 18, 20});
    auto r = pressure_recovery(s, 0.25, p);
    CHECK(r.moved_kg == Catch::Approx(4.5));
    CHECK(r.state.mp[3] == Catch::Approx(10.0));
    CHECK(r.state.mp[4] == Catch::Approx(13.5));
    CHECK(r.state.mp[5] == Catch::Approx(20.0));
  }
}

TEST_CASE("pressure_recovery respects receiver headroom") {
  PlantParams p;
  p.mdot_pr_nominal = 1000.0;  // want far above what fits
  auto s = state_with(5.0, {43.0, 43.0, 43.0, 30, 30, 30});
  auto r = pressure_recovery(s, 1.0, p);
  CHECK(r.moved_kg == Catch::Approx(0.99));  // 3 * 0.33 headroom
  for (int i = 0; i < 3; ++i) CHECK(r.state.mp[static_cast<size_t>(i)] == Catch::Approx(43.33));
  CHECK(r.state.mp_total() == Catch::Approx(s.mp_total()));
}

TEST_CASE("refuel draws the lightest eligible tanks, never below m_350") {
  const PlantParams p = fueling_params();
  auto s = state_with(5.0, {34.70, 36.70, 30, 30, 30, 30});

  auto r = refuel(s, 4.0, 1.0 / 12.0, p);
  CHECK(r.delivered_kg == Catch::Approx(4.0));
  CHECK(r.state.mp[0] == Catch::Approx(33.70));
  CHECK(r.state.mp[1] == Catch::Approx(33.70));
  CHECK(r.state.mp[2] == Catch::Approx(30.0));

  SECTION("no eligible tank") {
    auto s2 = state_with(5.0, {33.0, 33.5, 30, 30, 30, 30});
    auto r2 = refuel(s2, 4.0, 1.0 / 12.0, p);
    CHECK(r2.delivered_kg == 0.0);
    CHECK(r2.state.mp == s2.mp);
  }
  SECTION("zero request leaves the state alone") {
    auto r2 = refuel(s, 0.0, 1.0 / 12.0, p);
    CHECK(r2.delivered_kg == 0.0);
    CHECK(r2.state.mp == s.mp);
  }
}

TEST_CASE("refuel property: no tank ends below m_350") {
  const PlantParams p = fueling_params();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> um(25.0, 43.33), ureq(0.0, 30.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> mp(6);
    for (double& m : mp) m = um(rng);
    auto s = state_with(5.0, mp);
    auto r = refuel(s, ureq(rng), 1.0 / 12.0, p);
    for (size_t i = 0; i < mp.size(); ++i) {
      if (r.state.mp[i] < mp[i])  // a drawn tank must not cross the threshold
        CHECK(r.state.mp[i] >= 33.70 - 1e-12);
      CHECK(r.state.mp[i] <= mp[i] + 1e-12);
    }
    CHECK(r.delivered_kg == Catch::Approx(s.mp_total() - r.state.mp_total()).margin(1e-12));
  }
}

TEST_CASE("lp_to_mp fills the higher section first") {
  PlantParams p;
  p.m_lp_max = 50.0;  // widen the buffer so the reference quantities fit

  auto s = state_with(30.0, {40, 40, 40, 10, 20, 30});
  auto r = lp_to_mp(s, 25.0, 1.0, p);
  CHECK(r.mp[0] == Catch::Approx(43.33));
  CHECK(r.mp[1] == Catch::Approx(43.33));
  CHECK(r.mp[2] == Catch::Approx(43.33));
  CHECK(r.mp[3] == Catch::Approx(22.505));
  CHECK(r.mp[4] == Catch::Approx(22.505));
  CHECK(r.mp[5] == Catch::Approx(30.0));
  CHECK(r.m_lp == Catch::Approx(5.0));

  SECTION("higher section full: everything goes to the lower") {
    auto s2 = state_with(10.0, {43.33, 43.33, 43.33, 10, 10, 10});
    auto r2 = lp_to_mp(s2, 6.0, 1.0, p);
    CHECK(r2.mp[3] == Catch::Approx(12.0));
    CHECK(r2.mp[4] == Catch::Approx(12.0));
    CHECK(r2.mp[5] == Catch::Approx(12.0));
    CHECK(r2.m_lp == Catch::Approx(4.0));
  }
  SECTION("everything full: nothing moves") {
    auto s2 = state_with(10.0, std::vector<double>(6, 43.33));
    auto r2 = lp_to_mp(s2, 6.0, 1.0, p);
    CHECK(r2.m_lp == Catch::Approx(10.0));
  }
  SECTION("ties resolve to section A") {
    auto s2 = state_with(10.0, {20, 20, 20, 20, 20, 20});
    auto r2 = lp_to_mp(s2, 3.0, 1.0, p);
    CHECK(r2.mp[0] == Catch::Approx(21.0));
    CHECK(r2.mp[3] == Catch::Approx(20.0));
  }
}

TEST_CASE("electrolyzer warm-up takes three base steps") {
  PlantParams p;
  auto s = state_with(5.0, {35, 35, 35, 30, 30, 30});
  AppliedInput on{true, 225.0, false, false, 0.0};
  const double ts = 1.0 / 12.0;

  auto o1 = step(s, on, ts, p);
  CHECK_FALSE(o1.ely_ready);
  CHECK(o1.production_kg == 0.0);
  CHECK(o1.state.warmup_elapsed_h == Catch::Approx(ts));
  REQUIRE(o1.adjustments.size() == 1);
  CHECK(o1.adjustments[0] == InputAdjust::ely_not_ready);

  auto o2 = step(o1.state, on, ts, p);
  CHECK_FALSE(o2.ely_ready);
  auto o3 = step(o2.state, on, ts, p);
  CHECK_FALSE(o3.ely_ready);

  // 3 x 5 min commanded-on: ready despite 3*(1/12) rounding below 0.25
  auto o4 = step(o3.state, on, ts, p);
  CHECK(o4.ely_ready);
  CHECK(o4.p_ely_kw == Catch::Approx(225.0));
  CHECK(o4.production_kg == Catch::Approx(eval1d(p.ely_map, 225.0) * ts));

  SECTION("off-command resets the clock immediately") {
    auto off = step(o3.state, AppliedInput{}, ts, p);
    CHECK(off.state.warmup_elapsed_h == 0.0);
    auto oagain = step(off.state, on, ts, p);
    CHECK_FALSE(oagain.ely_ready);
  }
}

TEST_CASE("power setpoint clipping") {
  PlantParams p;
  auto s = state_with(5.0, {35, 35, 35, 30, 30, 30});
  s.ely_on = true;
  s.warmup_elapsed_h = 1.0;  // warm
  const double ts = 1.0 / 12.0;

  SECTION("below minimum: forced off") {
    auto o = step(s, {true, 40.0, false, false, 0.0}, ts, p);
    CHECK(o.p_ely_kw == 0.0);
    CHECK(o.production_kg == 0.0);
    REQUIRE(o.adjustments.size() == 1);
    CHECK(o.adjustments[0] == InputAdjust::ely_below_min);
  }
  SECTION("above maximum: clamped") {
    auto o = step(s, {true, 300.0, false, false, 0.0}, ts, p);
    CHECK(o.p_ely_kw == Catch::Approx(225.0));
    REQUIRE(o.adjustments.size() == 1);
    CHECK(o.adjustments[0] == InputAdjust::ely_above_max);
  }
  SECTION("commanded off with nonzero power") {
    auto o = step(s, {false, 100.0, false, false, 0.0}, ts, p);
    CHECK(o.p_ely_kw == 0.0);
    REQUIRE(o.adjustments.size() == 1);
    CHECK(o.adjustments[0] == InputAdjust::ely_off);
  }
  SECTION("all-off input leaves the plant still") {
    auto o = step(s, AppliedInput{}, ts, p);
    CHECK(o.state.m_lp == Catch::Approx(s.m_lp));
    CHECK(o.state.mp == s.mp);
    CHECK(o.state.warmup_elapsed_h == 0.0);
    CHECK(o.p_total_kw() == 0.0);
    CHECK(o.clips.empty());
  }
}

TEST_CASE("composite step follows the PR -> refuel -> fill order") {
  PlantParams p = fueling_params();  // m_350 = 33.70
  auto s = state_with(5.0, {34, 33, 32, 20, 15, 10});
  s.ely_on = true;
  s.warmup_elapsed_h = 1.0;
  const double ts = 1.0 / 12.0;

  // PR first: move 1.5 kg from B (tank 6 at floor skipped, tank 5 drained),
  // equalize into A; then refuel 0.5 kg from the only tank above 33.70.
  AppliedInput u{true, 0.0, false, true, 6.0};
  auto o = step(s, u, ts, p);

  CHECK(o.pr_moved_kg == Catch::Approx(1.5));
  CHECK(o.state.mp[5] == Catch::Approx(10.0));
  CHECK(o.state.mp[4] == Catch::Approx(13.5));
  CHECK(o.state.mp[3] == Catch::Approx(20.0));
  // A received 1.5: (34, 33, 32) -> (34, 33.25, 33.25), then refuel takes
  // 0.30 from tank 1 (34 -> 33.70)
  CHECK(o.state.mp[0] == Catch::Approx(33.70));
  CHECK(o.state.mp[1] == Catch::Approx(33.25));
  CHECK(o.state.mp[2] == Catch::Approx(33.25));
  CHECK(o.delivered_kg == Catch::Approx(0.30));
  CHECK(o.shortfall_kg == Catch::Approx(0.20));
  CHECK(o.p_pr_kw == Catch::Approx(p.p_comp_pr));
  CHECK(o.applied.b_pr);
  CHECK(o.applied.mdot_fuel == Catch::Approx(0.30 * 12.0));
}

TEST_CASE("LP bounds produce clip events, not exceptions") {
  PlantParams p;
  const double ts = 1.0 / 12.0;

  SECTION("transfer against an empty buffer") {
    auto s = state_with(0.5, {35, 35, 35, 30, 30, 30});
    auto o = step(s, {false, 0.0, true, false, 0.0}, ts, p);
    REQUIRE(o.clips.size() == 1);
    CHECK(o.clips[0].kind == ClipKind::lp_floor);
    CHECK(o.lpmp_kg == 0.0);
    CHECK(o.p_comp_kw == 0.0);
    CHECK_FALSE(o.applied.b_lpmp);
  }
  SECTION("transfer against full tanks") {
    auto s = state_with(8.0, std::vector<double>(6, 43.33));
    auto o = step(s, {false, 0.0, true, false, 0.0}, ts, p);
    REQUIRE(o.clips.size() == 1);
    CHECK(o.clips[0].kind == ClipKind::mp_caps);
    CHECK(o.lpmp_kg == 0.0);
  }
  SECTION("production against a full buffer curtails output") {
    auto s = state_with(11.0, {35, 35, 35, 30, 30, 30});
    s.ely_on = true;
    s.warmup_elapsed_h = 1.0;
    auto o = step(s, {true, 225.0, false, false, 0.0}, ts, p);
    REQUIRE(o.clips.size() == 1);
    CHECK(o.clips[0].kind == ClipKind::lp_cap_hard);
    CHECK(o.production_kg == Catch::Approx(0.0).margin(1e-12));
    CHECK(o.state.m_lp == Catch::Approx(11.0));
  }
  SECTION("both compressor modes at once is a caller bug") {
    auto s = state_with(5.0, {35, 35, 35, 30, 30, 30});
    CHECK_THROWS_AS(step(s, {false, 0.0, true, true, 0.0}, ts, p), Error);
  }
}

TEST_CASE("mass conservation across randomized steps") {
  PlantParams p;
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> ulp(0.5, 11.0), ump(5.0, 43.33), upow(0.0, 300.0),
      ufuel(0.0, 60.0);
  const double widths[] = {1.0 / 12.0, 0.5, 1.0, 24.0};

  PlantState s = state_with(5.0, {35.9639, 35.5306, 35.0973, 34.664, 25.998, 25.998});
  for (int k = 0; k < 2000; ++k) {
    if (k % 97 == 0) {  // occasionally jump to a fresh random state
      s = PlantState{};
      s.m_lp = ulp(rng);
      s.mp.resize(6);
      for (double& m : s.mp) m = ump(rng);
      s.ely_on = rng() % 2 == 0;
      s.warmup_elapsed_h = s.ely_on ? 0.3 : 0.0;
    }
    AppliedInput u;
    u.b_ely_on = rng() % 2 == 0;
    u.p_ely = upow(rng);
    const int comp = static_cast<int>(rng() % 3);
    u.b_lpmp = comp == 1;
    u.b_pr = comp == 2;
    u.mdot_fuel = ufuel(rng);
    const double ts = widths[rng() % 4];

    const double before = s.m_lp + s.mp_total();
    StepOutcome o = step(s, u, ts, p);
    const double after = o.state.m_lp + o.state.mp_total();
    REQUIRE(std::fabs(after - before - (o.production_kg - o.delivered_kg)) < 1e-9);
    REQUIRE(o.state.m_lp >= p.m_lp_min - 1e-9);
    REQUIRE(o.state.m_lp <= p.m_lp_max + 1e-9);
    for (double m : o.state.mp) {
      REQUIRE(m >= -1e-12);
      REQUIRE(m <= p.mp_tank_cap + 1e-12);
    }
    s = o.state;
  }
}
