#pragma once
// Heuristic six-tank plant model: water-filling equalization, pressure
// recovery, tank-wise refueling, LP->MP transfer, and electrolyzer warm-up.
// Serves both as the allocator's rollout oracle and as the simulated plant.
// Infeasible commands are clipped and logged in the outcome, never thrown.

#include <algorithm>
#include <numeric>
#include <vector>

#include "h2ems/common.hpp"
#include "h2ems/params.hpp"
#include "h2ems/pwla.hpp"

namespace h2ems {

struct AppliedInput {
  bool b_ely_on = false;
  double p_ely = 0.0;  // kW setpoint
  bool b_lpmp = false;
  bool b_pr = false;
  double mdot_fuel = 0.0;  // kg/h requested delivery
};

struct PlantState {
  double m_lp = 5.0;
  std::vector<double> mp;  // per-tank kg, section A first
  bool ely_on = false;     // last applied command
  double warmup_elapsed_h = 0.0;
  std::vector<int> on_history;  // applied on-commands at base resolution, oldest first

  double mp_total() const { return std::accumulate(mp.begin(), mp.end(), 0.0); }

  bool ely_ready(const PlantParams& p) const {
    return ely_on && warmup_elapsed_h >= p.t_startup_h - 1e-9;
  }
};

inline void validate_tanks(const PlantState& s, const PlantParams& p) {
  if (static_cast<int>(s.mp.size()) != p.n_mp_tanks)
    throw ConfigError(strf("state: %zu tanks, expected %d", s.mp.size(), p.n_mp_tanks));
  for (double m : s.mp)
    if (m < -1e-9 || m > p.mp_tank_cap + 1e-9)
      throw ConfigError(strf("state: tank mass %.6g outside [0, %.6g]", m, p.mp_tank_cap));
}

inline void validate_state(const PlantState& s, const PlantParams& p) {
  validate_tanks(s, p);
  if (s.m_lp < -1e-9 || s.m_lp > p.m_lp_max + 1e-9)
    throw ConfigError(strf("state: m_lp %.6g outside [0, %.6g]", s.m_lp, p.m_lp_max));
  if (s.warmup_elapsed_h < 0) throw ConfigError("state: negative warm-up clock");
}

// Aggregate masses of the two tank sections (A first).
inline std::pair<double, double> section_masses(const PlantState& s, const PlantParams& p) {
  const int half = p.section_size();
  double a = 0, b = 0;
  for (int i = 0; i < half; ++i) a += s.mp[static_cast<size_t>(i)];
  for (int i = half; i < p.n_mp_tanks; ++i) b += s.mp[static_cast<size_t>(i)];
  return {a, b};
}

struct FillResult {
  std::vector<double> masses;
  double filled_kg = 0.0;
};

// Progressive equalization: raise the lowest tank to the next level, then
// both, and so on, honoring per-tank caps. Closed form via the final fill
// level L with sum(min(max(m_i, L), cap_i)) = sum(m) + absorbed.
inline FillResult fill_section(const std::vector<double>& masses,
                               const std::vector<double>& caps, double amount) {
  if (masses.size() != caps.size() || masses.empty())
    throw Error("fill_section: masses/caps size mismatch");
  if (amount < 0) throw Error("fill_section: negative amount");
  double total = 0, headroom = 0;
  for (size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] > caps[i] + 1e-9)
      throw Error(strf("fill_section: mass %.6g above cap %.6g", masses[i], caps[i]));
    total += masses[i];
    headroom += std::max(0.0, caps[i] - masses[i]);
  }
  const double absorbed_target = std::min(amount, headroom);
  if (absorbed_target <= 0.0) return {masses, 0.0};
  const double target = total + absorbed_target;

  std::vector<double> levels = masses;
  levels.insert(levels.end(), caps.begin(), caps.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  auto f = [&](double level) {
    double s = 0;
    for (size_t i = 0; i < masses.size(); ++i)
      s += std::min(std::max(masses[i], level), caps[i]);
    return s;
  };

  double level = levels.back();
  for (size_t k = 0; k + 1 < levels.size(); ++k) {
    const double f1 = f(levels[k + 1]);
    if (f1 >= target) {
      const double f0 = f(levels[k]);
      level = f1 > f0 ? levels[k] + (target - f0) * (levels[k + 1] - levels[k]) / (f1 - f0)
                      : levels[k + 1];
      break;
    }
  }

  FillResult r;
  r.masses.resize(masses.size());
  double after = 0;
  for (size_t i = 0; i < masses.size(); ++i) {
    r.masses[i] = std::min(std::max(masses[i], level), caps[i]);
    after += r.masses[i];
  }
  r.filled_kg = after - total;
  return r;
}

struct PrResult {
  PlantState state;
  double moved_kg = 0.0;
};

// Move up to mdot_pr_nominal * T_s from the lower-mass section into the
// higher-mass one: drain the lowest donor tanks down to their floor, absorb
// through progressive equalization. No-op when sections match.
inline PrResult pressure_recovery(const PlantState& s0, double ts_h, const PlantParams& p) {
  validate_state(s0, p);
  PrResult r{s0, 0.0};
  const auto [sec_a, sec_b] = section_masses(s0, p);
  if (std::fabs(sec_a - sec_b) < 1e-12) return r;

  const int half = p.section_size();
  const int donor0 = sec_a < sec_b ? 0 : half;
  const int recv0 = sec_a < sec_b ? half : 0;

  double surplus = 0, headroom = 0;
  for (int i = 0; i < half; ++i) {
    surplus += std::max(0.0, s0.mp[static_cast<size_t>(donor0 + i)] - p.mp_tank_floor);
    headroom += p.mp_tank_cap - s0.mp[static_cast<size_t>(recv0 + i)];
  }
  const double move = std::min({p.mdot_pr_nominal * ts_h, surplus, headroom});
  if (move <= 0.0) return r;

  std::vector<int> order(static_cast<size_t>(half));
  std::iota(order.begin(), order.end(), donor0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = s0.mp[static_cast<size_t>(a)], mb = s0.mp[static_cast<size_t>(b)];
    return ma != mb ? ma < mb : a < b;
  });
  double remaining = move;
  for (int idx : order) {
    if (remaining <= 0) break;
    double& m = r.state.mp[static_cast<size_t>(idx)];
    const double take = std::min(remaining, std::max(0.0, m - p.mp_tank_floor));
    if (take <= 0) continue;  // at the floor: skip, keep draining the rest
    m -= take;
    remaining -= take;
  }
  const double taken = move - remaining;

  std::vector<double> recv(static_cast<size_t>(half)), caps(static_cast<size_t>(half),
                                                           p.mp_tank_cap);
  for (int i = 0; i < half; ++i) recv[static_cast<size_t>(i)] = r.state.mp[static_cast<size_t>(recv0 + i)];
  FillResult fr = fill_section(recv, caps, taken);
  for (int i = 0; i < half; ++i) r.state.mp[static_cast<size_t>(recv0 + i)] = fr.masses[static_cast<size_t>(i)];
  r.moved_kg = fr.filled_kg;
  return r;
}

struct RefuelResult {
  PlantState state;
  double delivered_kg = 0.0;
};

// Dispense from the lowest-mass tanks still above the 350 bar-equivalent
// mass, never drawing below it.
inline RefuelResult refuel(const PlantState& s0, double m_to_fuel, double ts_h,
                           const PlantParams& p) {
  (void)ts_h;
  validate_state(s0, p);
  if (m_to_fuel < 0) throw Error("refuel: negative request");
  RefuelResult r{s0, 0.0};
  if (m_to_fuel == 0) return r;

  const double m350 = p.m_350();
  std::vector<int> order(s0.mp.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = s0.mp[static_cast<size_t>(a)], mb = s0.mp[static_cast<size_t>(b)];
    return ma != mb ? ma < mb : a < b;
  });
  double remaining = m_to_fuel;
  for (int idx : order) {
    if (remaining <= 0) break;
    double& m = r.state.mp[static_cast<size_t>(idx)];
    const double take = std::min(remaining, std::max(0.0, m - m350));
    if (take <= 0) continue;
    m -= take;
    remaining -= take;
  }
  r.delivered_kg = m_to_fuel - remaining;
  return r;
}

// Transfer mdot * T_s from the LP tank into the sections, higher-mass section
// first (ties resolve to A); the LP tank drops by exactly the absorbed mass.
// Caller keeps the transfer within m_LP - m_LP,min.
inline PlantState lp_to_mp(const PlantState& s0, double mdot, double ts_h,
                           const PlantParams& p) {
  // mid-step callers may carry m_lp above the cap (production lands before
  // the cap is enforced), so only the tank invariants are checked here
  validate_tanks(s0, p);
  if (s0.m_lp < -1e-9) throw ConfigError("lp_to_mp: negative LP mass");
  if (mdot < 0) throw Error("lp_to_mp: negative flow");
  const double mass = mdot * ts_h;
  if (mass > s0.m_lp - p.m_lp_min + 1e-9)
    throw Error(strf("lp_to_mp: transfer %.6g exceeds LP stock above minimum", mass));
  PlantState s = s0;
  if (mass <= 0) return s;

  const int half = p.section_size();
  const auto [sec_a, sec_b] = section_masses(s0, p);
  const int first0 = sec_b > sec_a ? half : 0;  // ties go to A
  const int second0 = first0 == 0 ? half : 0;

  double remaining = mass;
  for (int base : {first0, second0}) {
    if (remaining <= 0) break;
    std::vector<double> sec(static_cast<size_t>(half)), caps(static_cast<size_t>(half),
                                                            p.mp_tank_cap);
    for (int i = 0; i < half; ++i) sec[static_cast<size_t>(i)] = s.mp[static_cast<size_t>(base + i)];
    FillResult fr = fill_section(sec, caps, remaining);
    for (int i = 0; i < half; ++i) s.mp[static_cast<size_t>(base + i)] = fr.masses[static_cast<size_t>(i)];
    remaining -= fr.filled_kg;
  }
  s.m_lp -= mass - remaining;
  return s;
}

enum class ClipKind { lp_cap_hard, lp_floor, mp_caps };

inline const char* to_string(ClipKind k) {
  switch (k) {
    case ClipKind::lp_cap_hard: return "lp_cap_hard";
    case ClipKind::lp_floor: return "lp_floor";
    case ClipKind::mp_caps: return "mp_caps";
  }
  return "?";
}

struct ClipEvent {
  ClipKind kind;
  double amount_kg;
};

enum class InputAdjust { ely_off, ely_not_ready, ely_below_min, ely_above_max, pr_idle, fill_idle };

inline const char* to_string(InputAdjust a) {
  switch (a) {
    case InputAdjust::ely_off: return "ely_off";
    case InputAdjust::ely_not_ready: return "ely_not_ready";
    case InputAdjust::ely_below_min: return "ely_below_min";
    case InputAdjust::ely_above_max: return "ely_above_max";
    case InputAdjust::pr_idle: return "pr_idle";
    case InputAdjust::fill_idle: return "fill_idle";
  }
  return "?";
}

struct StepOutcome {
  PlantState state;
  AppliedInput applied;  // what actually happened, for allocator rollouts
  double p_ely_kw = 0.0;
  double p_comp_kw = 0.0;
  double p_pr_kw = 0.0;
  double production_kg = 0.0;
  double mdot_ely = 0.0;  // kg/h averaged over the step
  double delivered_kg = 0.0;
  double shortfall_kg = 0.0;
  double mdot_fuel_real = 0.0;
  double lpmp_kg = 0.0;
  double pr_moved_kg = 0.0;
  bool ely_ready = false;
  std::vector<ClipEvent> clips;          // hard-bound violations of the plan
  std::vector<InputAdjust> adjustments;  // commanded values that could not apply

  double p_total_kw() const { return p_ely_kw + p_comp_kw + p_pr_kw; }
};

// One plant step in Algorithm-1 order: electrolyzer power clipping, pressure
// recovery, refueling, LP->MP transfer, LP cap enforcement, warm-up clock.
inline StepOutcome step(const PlantState& s0, const AppliedInput& u, double ts_h,
                        const PlantParams& p) {
  validate_state(s0, p);
  if (ts_h <= 0) throw Error("step: nonpositive step width");
  if (u.b_lpmp && u.b_pr) throw Error("step: both compressor modes commanded");
  if (u.mdot_fuel < 0 || u.p_ely < 0) throw Error("step: negative command");

  StepOutcome o;
  o.state = s0;
  const double mass_before = s0.m_lp + s0.mp_total();

  // electrolyzer power, from the step-start readiness
  o.ely_ready = u.b_ely_on && s0.warmup_elapsed_h >= p.t_startup_h - 1e-9;
  double p_app = 0.0;
  if (!u.b_ely_on) {
    if (u.p_ely > 0) o.adjustments.push_back(InputAdjust::ely_off);
  } else if (!o.ely_ready) {
    if (u.p_ely > 0) o.adjustments.push_back(InputAdjust::ely_not_ready);
  } else if (u.p_ely < p.p_ely_min - 1e-9) {
    if (u.p_ely > 0) o.adjustments.push_back(InputAdjust::ely_below_min);
  } else if (u.p_ely > p.p_ely_max + 1e-9) {
    p_app = p.p_ely_max;
    o.adjustments.push_back(InputAdjust::ely_above_max);
  } else {
    p_app = std::clamp(u.p_ely, p.p_ely_min, p.p_ely_max);
  }
  o.p_ely_kw = p_app;
  double production = eval1d(p.ely_map, p_app) * ts_h;

  if (u.b_pr) {
    PrResult pr = pressure_recovery(o.state, ts_h, p);
    o.state = pr.state;
    o.pr_moved_kg = pr.moved_kg;
    if (pr.moved_kg > 0)
      o.p_pr_kw = p.p_comp_pr;
    else
      o.adjustments.push_back(InputAdjust::pr_idle);
  }

  {
    RefuelResult rf = refuel(o.state, u.mdot_fuel * ts_h, ts_h, p);
    o.state = rf.state;
    o.delivered_kg = rf.delivered_kg;
    o.shortfall_kg = std::max(0.0, u.mdot_fuel * ts_h - rf.delivered_kg);
    o.mdot_fuel_real = rf.delivered_kg / ts_h;
  }

  o.state.m_lp += production;
  if (u.b_lpmp) {
    const double lp_at_start = std::clamp(s0.m_lp, p.flow_map.x.front(), p.flow_map.x.back());
    const double desired = eval1d(p.flow_map, lp_at_start) * ts_h;
    const double avail = std::max(0.0, o.state.m_lp - p.m_lp_min);
    const double feasible = std::min(desired, avail);
    if (desired > avail + 1e-9)
      o.clips.push_back({ClipKind::lp_floor, desired - avail});
    const double lp_before = o.state.m_lp;
    o.state = lp_to_mp(o.state, feasible / ts_h, ts_h, p);
    o.lpmp_kg = lp_before - o.state.m_lp;
    if (o.lpmp_kg < feasible - 1e-9)
      o.clips.push_back({ClipKind::mp_caps, feasible - o.lpmp_kg});
    if (o.lpmp_kg > 0) {
      const double mp_at_start =
          std::clamp(s0.mp_total(), p.comp_map.y.front(), p.comp_map.y.back());
      const double lp_for_map = std::clamp(s0.m_lp, p.comp_map.x.front(), p.comp_map.x.back());
      o.p_comp_kw = eval2d(p.comp_map, lp_for_map, mp_at_start);
    } else {
      o.adjustments.push_back(InputAdjust::fill_idle);
    }
  }

  if (o.state.m_lp > p.m_lp_max + 1e-9) {
    const double excess = o.state.m_lp - p.m_lp_max;
    o.clips.push_back({ClipKind::lp_cap_hard, excess});
    if (excess > production + 1e-9) throw Error("step: LP overflow exceeds production");
    production -= excess;
    o.state.m_lp = p.m_lp_max;
  }
  o.production_kg = production;
  o.mdot_ely = production / ts_h;

  o.state.warmup_elapsed_h = u.b_ely_on ? s0.warmup_elapsed_h + ts_h : 0.0;
  o.state.ely_on = u.b_ely_on;
  o.state.on_history.push_back(u.b_ely_on ? 1 : 0);
  if (o.state.on_history.size() > 64)
    o.state.on_history.erase(o.state.on_history.begin(),
                             o.state.on_history.end() - 64);

  o.applied = AppliedInput{u.b_ely_on, p_app, o.lpmp_kg > 0, o.pr_moved_kg > 0,
                           o.mdot_fuel_real};

  const double mass_after = o.state.m_lp + o.state.mp_total();
  const double expected = mass_before + o.production_kg - o.delivered_kg;
  if (std::fabs(mass_after - expected) > 1e-9)
    throw Error(strf("step: mass leak %.3g kg", mass_after - expected));
  return o;
}

}  // namespace h2ems
