#pragma once
// The per-step optimal control problem: a MILP over the 35-step unequal
// horizon with electrolyzer warm-up logic, PWLA-embedded device maps, tank
// dynamics, grid/peak/startup/fuel-mismatch/CO2/soft-minimum cost terms, and
// the allocator's optional pressure-recovery constraints.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "h2ems/common.hpp"
#include "h2ems/milp.hpp"
#include "h2ems/params.hpp"
#include "h2ems/pwla.hpp"

namespace h2ems {

struct ForecastSlice {
  std::vector<double> p_pv_kw;            // >= 0
  std::vector<double> p_dem_kw;           // consumption carries a negative sign
  std::vector<double> mdot_fuel_demand;   // kg/h, >= 0

  void validate(int n_steps) const {
    const size_t n = static_cast<size_t>(n_steps);
    if (p_pv_kw.size() != n || p_dem_kw.size() != n || mdot_fuel_demand.size() != n)
      throw ConfigError("forecast: series length != horizon length");
    for (double v : p_pv_kw)
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("forecast: PV must be >= 0");
    for (double v : p_dem_kw)
      if (!(v <= 1e-9) || !std::isfinite(v))
        throw ConfigError("forecast: load must carry a negative sign");
    for (double v : mdot_fuel_demand)
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("forecast: fuel demand must be >= 0");
  }
};

struct OcpInit {
  double m_lp0 = 5.0;
  double m_mp0 = 190.0;
  std::vector<int> on_history;  // applied commands at base resolution, oldest first
  bool ely_ready = false;
  double j_prev_eur = 0.0;      // peak cost already committed
  double e_overload0 = 0.0;     // kWh, only with the overload buffer

  bool prev_on() const { return !on_history.empty() && on_history.back() != 0; }
};

struct AllocatorConstraints {
  std::vector<char> b_consider_pr;           // size n_cutoff
  double t_pr_h = 0.0;                       // Eq. 22 right-hand side
  std::vector<std::pair<int, double>> m_mp_lim;  // (state index, kg), Eq. 24
};

// Which earlier on-commands each step's warm-up window spans: n_lb_pred
// prediction steps plus n_lb_hist applied base slots; steps beyond
// n_consider need no window at all.
struct StartupLookback {
  int n_consider = -1;
  std::vector<int> n_lb_pred;  // size n_consider + 1
  std::vector<int> n_lb_hist;
};

inline StartupLookback startup_lookback(const HorizonGrid& grid, double t_startup_h) {
  grid.validate();
  if (t_startup_h < 0) throw ConfigError("startup_lookback: negative warm-up time");
  StartupLookback r;
  for (int i = 0; i < grid.n(); ++i)
    if (grid.step(i) <= 2.0 * t_startup_h + 1e-12) r.n_consider = i;
  for (int n = 0; n <= r.n_consider; ++n) {
    double acc = 0.0;
    int pred = 0;
    for (int i = n - 1; i >= 0 && acc < t_startup_h - 1e-9; --i) {
      acc += grid.step(i);
      ++pred;
    }
    int hist = 0;
    if (acc < t_startup_h - 1e-9)
      hist = static_cast<int>(std::ceil((t_startup_h - acc) / grid.base_step_h - 1e-9));
    r.n_lb_pred.push_back(pred);
    r.n_lb_hist.push_back(hist);
  }
  return r;
}

inline double previous_peak_cost(const std::vector<double>& applied_p_grid_kw,
                                 double initial_peak_kw, double c_peak) {
  double peak = std::max(0.0, initial_peak_kw);
  for (double p : applied_p_grid_kw) peak = std::max(peak, p);
  return c_peak * peak;
}

struct OcpHandles {
  std::vector<VarRef> b_ely, b_tilde, b_lpmp, b_pr;
  std::vector<VarRef> p_ely, mdot_ely, mdot_lpmp, p_comp, p_grid, z_gridpos;
  std::vector<VarRef> mdot_fuel, z_fuel;
  std::vector<VarRef> m_lp, m_mp;            // states, N+1 entries
  std::vector<VarRef> z_soft_lp, z_soft_mp;  // N+1 entries
  std::vector<VarRef> z_start;
  VarRef z_peak;
  std::vector<VarRef> z_lim;  // parallel to AllocatorConstraints::m_mp_lim
  std::vector<VarRef> z_over, e_over;
  LinExpr j_grid, j_peak, j_startup, j_user, j_co2, j_soft, j_alloc, j_overload, j_water;
};

struct OcpBuild {
  MilpModel model;
  OcpHandles h;
};

inline OcpBuild build_ocp(const PlantParams& plant, const CostParams& costs,
                          const HorizonGrid& grid, const ForecastSlice& fc,
                          const OcpInit& init,
                          const AllocatorConstraints* alloc = nullptr) {
  plant.validate();
  costs.validate();
  grid.validate();
  const int n_steps = grid.n();
  fc.validate(n_steps);
  if (init.m_mp0 < plant.m_mp_min - 1e-6 || init.m_mp0 > plant.m_mp_max_effective() + 1e-6)
    throw ConfigError("ocp: initial MP mass outside bounds");
  if (init.m_lp0 < plant.m_lp_min - 1e-6 || init.m_lp0 > plant.m_lp_max + 1e-6)
    throw ConfigError("ocp: initial LP mass outside bounds");

  OcpBuild out;
  MilpModel& m = out.model;
  OcpHandles& h = out.h;

  const StartupLookback lb = startup_lookback(grid, plant.t_startup_h);

  // fixed binaries mirroring the measured plant: recent on-commands + ready
  int max_hist = 0;
  for (int v : lb.n_lb_hist) max_hist = std::max(max_hist, v);
  std::vector<VarRef> hist_vars;  // hist_vars[j] = command j+1 base slots ago
  for (int j = 1; j <= max_hist; ++j) {
    VarRef v = m.add_binary(strf("hist%d", j));
    const size_t sz = init.on_history.size();
    const int val = static_cast<size_t>(j) <= sz
                        ? init.on_history[sz - static_cast<size_t>(j)]
                        : 0;
    m.fix(v, val ? 1.0 : 0.0);
    hist_vars.push_back(v);
  }
  VarRef ready = m.add_binary("ready");
  m.fix(ready, init.ely_ready ? 1.0 : 0.0);

  // states
  for (int n = 0; n <= n_steps; ++n) {
    VarRef lp = n == 0 ? m.add_continuous(init.m_lp0, init.m_lp0, "m_lp0")
                       : m.add_continuous(plant.m_lp_min, plant.m_lp_max, strf("m_lp%d", n));
    VarRef mp = n == 0 ? m.add_continuous(init.m_mp0, init.m_mp0, "m_mp0")
                       : m.add_continuous(plant.m_mp_min, plant.m_mp_max_effective(),
                                          strf("m_mp%d", n));
    h.m_lp.push_back(lp);
    h.m_mp.push_back(mp);
  }

  // per-step devices and balances
  std::map<int, VarRef> y_or_by_hist;  // warm-up history disjunction, shared by depth
  for (int n = 0; n < n_steps; ++n) {
    const double ts = grid.step(n);
    h.b_ely.push_back(m.add_binary(strf("b_ely%d", n)));
    h.b_lpmp.push_back(m.add_binary(strf("b_lpmp%d", n)));
    h.b_pr.push_back(m.add_binary(strf("b_pr%d", n)));
    m.add_constraint(LinExpr(h.b_lpmp[n]) + LinExpr(h.b_pr[n]), Sense::le, 1.0,
                     strf("comp_excl%d", n));

    // productive flag: warm-up window of on-commands, else the command itself
    if (n <= lb.n_consider) {
      VarRef bt = m.add_binary(strf("b_tilde%d", n));
      std::vector<VarRef> window;
      for (int i = n; i >= n - lb.n_lb_pred[static_cast<size_t>(n)]; --i)
        window.push_back(h.b_ely[static_cast<size_t>(i)]);
      const int hist = lb.n_lb_hist[static_cast<size_t>(n)];
      if (hist > 0) {
        auto it = y_or_by_hist.find(hist);
        if (it == y_or_by_hist.end()) {
          VarRef y_hist = m.add_binary(strf("y_hist%d", hist));
          std::vector<VarRef> hs(hist_vars.begin(), hist_vars.begin() + hist);
          m.logical_and(y_hist, hs, strf("y_hist%d", hist));
          VarRef y_or = m.add_binary(strf("y_or%d", hist));
          m.logical_or(y_or, {y_hist, ready}, strf("y_or%d", hist));
          it = y_or_by_hist.emplace(hist, y_or).first;
        }
        window.push_back(it->second);
      }
      m.logical_and(bt, window, strf("warm%d", n));
      h.b_tilde.push_back(bt);
    } else {
      h.b_tilde.push_back(h.b_ely[static_cast<size_t>(n)]);
    }

    VarRef p_ely = m.add_continuous(0.0, plant.p_ely_max, strf("p_ely%d", n));
    h.p_ely.push_back(p_ely);
    m.add_constraint(LinExpr(p_ely) - h.b_tilde[static_cast<size_t>(n)] * plant.p_ely_max,
                     Sense::le, 0.0, strf("ely_hi%d", n));
    m.add_constraint(LinExpr(p_ely) - h.b_tilde[static_cast<size_t>(n)] * plant.p_ely_min,
                     Sense::ge, 0.0, strf("ely_lo%d", n));
    h.mdot_ely.push_back(emit1d(m, plant.ely_map, LinExpr(p_ely), strf("mde%d", n)));

    VarRef flow_raw = emit1d(m, plant.flow_map, LinExpr(h.m_lp[static_cast<size_t>(n)]),
                             strf("flr%d", n));
    h.mdot_lpmp.push_back(
        m.gate_product(h.b_lpmp[static_cast<size_t>(n)], flow_raw, strf("mdl%d", n)));
    VarRef p_comp_raw = emit2d(m, plant.comp_map, LinExpr(h.m_lp[static_cast<size_t>(n)]),
                               LinExpr(h.m_mp[static_cast<size_t>(n)]), strf("pcr%d", n));
    h.p_comp.push_back(
        m.gate_product(h.b_lpmp[static_cast<size_t>(n)], p_comp_raw, strf("pc%d", n)));

    // Redundant at integer points, but they stop the relaxation from moving
    // gas at a fraction of the compressor power; they cut solve times hard.
    m.add_constraint(LinExpr(h.p_comp[static_cast<size_t>(n)]) -
                     h.b_lpmp[static_cast<size_t>(n)] * plant.comp_map.min_z(),
                     Sense::ge, 0.0, strf("comp_floor%d", n));
    m.add_constraint(LinExpr(h.mdot_lpmp[static_cast<size_t>(n)]) -
                     h.b_lpmp[static_cast<size_t>(n)] * plant.flow_map.min_y(),
                     Sense::ge, 0.0, strf("flow_floor%d", n));
    if (plant.flow_map.max_y() > 0)
      m.add_constraint(LinExpr(h.p_comp[static_cast<size_t>(n)]) -
                       h.mdot_lpmp[static_cast<size_t>(n)] *
                           (plant.comp_map.min_z() / plant.flow_map.max_y()),
                       Sense::ge, 0.0, strf("comp_per_kg%d", n));

    // fuel split: deliver + slack = demand
    const double dem = fc.mdot_fuel_demand[static_cast<size_t>(n)];
    h.mdot_fuel.push_back(m.add_continuous(0.0, dem, strf("mdf%d", n)));
    h.z_fuel.push_back(m.add_continuous(0.0, dem, strf("zf%d", n)));
    m.add_constraint(LinExpr(h.mdot_fuel[static_cast<size_t>(n)]) +
                     LinExpr(h.z_fuel[static_cast<size_t>(n)]),
                     Sense::eq, dem, strf("fuel%d", n));

    // grid balance with per-step bounds from the device extrema
    const double cst = -fc.p_pv_kw[static_cast<size_t>(n)] - fc.p_dem_kw[static_cast<size_t>(n)];
    const double hi = plant.p_ely_max + plant.comp_map.max_z() + plant.p_comp_pr + cst;
    VarRef p_grid = m.add_continuous(cst, hi, strf("p_grid%d", n));
    h.p_grid.push_back(p_grid);
    LinExpr bal = LinExpr(p_grid) - LinExpr(p_ely) -
                  LinExpr(h.p_comp[static_cast<size_t>(n)]) -
                  h.b_pr[static_cast<size_t>(n)] * plant.p_comp_pr;
    m.add_constraint(std::move(bal), Sense::eq, cst, strf("bal%d", n));
    h.z_gridpos.push_back(m.add_max_zero(LinExpr(p_grid), strf("zgp%d", n)));

    // dynamics
    LinExpr dlp = LinExpr(h.m_lp[static_cast<size_t>(n) + 1]) -
                  LinExpr(h.m_lp[static_cast<size_t>(n)]) -
                  h.mdot_ely[static_cast<size_t>(n)] * ts +
                  h.mdot_lpmp[static_cast<size_t>(n)] * ts;
    m.add_constraint(std::move(dlp), Sense::eq, 0.0, strf("dyn_lp%d", n));
    LinExpr dmp = LinExpr(h.m_mp[static_cast<size_t>(n) + 1]) -
                  LinExpr(h.m_mp[static_cast<size_t>(n)]) -
                  h.mdot_lpmp[static_cast<size_t>(n)] * ts +
                  h.mdot_fuel[static_cast<size_t>(n)] * ts;
    m.add_constraint(std::move(dmp), Sense::eq, 0.0, strf("dyn_mp%d", n));
  }

  // costs
  const double c_diff = costs.c_buy - costs.c_sell;
  for (int n = 0; n < n_steps; ++n) {
    const double ts = grid.step(n);
    h.j_grid += h.z_gridpos[static_cast<size_t>(n)] * (c_diff * ts);
    h.j_grid += h.p_grid[static_cast<size_t>(n)] * (costs.c_sell * ts);
    h.j_co2 += h.z_gridpos[static_cast<size_t>(n)] * (costs.c_co2 * ts);
    h.j_user += h.z_fuel[static_cast<size_t>(n)] * (costs.c_fuel_mismatch * ts);
  }

  {
    std::vector<LinExpr> peak_exprs{LinExpr(0.0)};
    for (int n = 0; n < n_steps; ++n)
      peak_exprs.push_back(h.p_grid[static_cast<size_t>(n)] * costs.c_peak -
                           LinExpr(init.j_prev_eur));
    h.z_peak = m.add_max_over(peak_exprs, "z_peak");
    h.j_peak = LinExpr(h.z_peak);
  }

  for (int n = 0; n < n_steps; ++n) {
    LinExpr rise = h.b_ely[static_cast<size_t>(n)] * costs.c_startup;
    if (n == 0)
      rise -= LinExpr(init.prev_on() ? costs.c_startup : 0.0);
    else
      rise -= h.b_ely[static_cast<size_t>(n) - 1] * costs.c_startup;
    h.z_start.push_back(m.add_max_zero(rise, strf("zst%d", n)));
    h.j_startup += LinExpr(h.z_start[static_cast<size_t>(n)]);
  }

  for (int n = 0; n <= n_steps; ++n) {
    const double ts = grid.step(std::min(n, n_steps - 1));
    VarRef zl = m.add_max_zero(LinExpr(plant.m_lp_soft_min) -
                               LinExpr(h.m_lp[static_cast<size_t>(n)]), strf("zsl%d", n));
    VarRef zm = m.add_max_zero(LinExpr(plant.m_mp_soft_min) -
                               LinExpr(h.m_mp[static_cast<size_t>(n)]), strf("zsm%d", n));
    h.z_soft_lp.push_back(zl);
    h.z_soft_mp.push_back(zm);
    h.j_soft += zl * (costs.soft_weight * ts);
    h.j_soft += zm * (costs.soft_weight * ts);
  }

  if (alloc) {
    if (static_cast<int>(alloc->b_consider_pr.size()) != grid.n_cutoff)
      throw ConfigError("ocp: allocator consider-vector size != n_cutoff");
    if (alloc->t_pr_h < 0) throw ConfigError("ocp: negative recovery duration");
    if (alloc->t_pr_h > 0) {
      LinExpr lhs;
      double reachable = 0.0;
      for (int k = 0; k < grid.n_cutoff; ++k)
        if (alloc->b_consider_pr[static_cast<size_t>(k)]) {
          lhs += h.b_pr[static_cast<size_t>(k)] * grid.step(k);
          reachable += grid.step(k);
        }
      if (reachable < alloc->t_pr_h - 1e-9)
        throw ConfigError("ocp: recovery duration unreachable with the considered steps");
      m.add_constraint(std::move(lhs), Sense::ge, alloc->t_pr_h, "pr_duration");
    }
    for (size_t i = 0; i < alloc->m_mp_lim.size(); ++i) {
      const auto& [sn, lim] = alloc->m_mp_lim[i];
      if (sn < 0 || sn > n_steps) throw ConfigError("ocp: allocator limit index out of range");
      VarRef z = m.add_max_zero(LinExpr(lim) - LinExpr(h.m_mp[static_cast<size_t>(sn)]),
                                strf("zlim%zu", i));
      h.z_lim.push_back(z);
      const double ts = grid.step(std::min(sn, n_steps - 1));
      h.j_alloc += z * (costs.allocator_slack_weight * ts);
    }
  }

  if (costs.overload_buffer) {
    VarRef e_prev = m.add_continuous(init.e_overload0, init.e_overload0, "e_over_init");
    h.e_over.push_back(e_prev);
    for (int n = 0; n < n_steps; ++n) {
      const double ts = grid.step(n);
      LinExpr acc = LinExpr(e_prev) + h.p_ely[static_cast<size_t>(n)] * ts -
                    LinExpr(costs.p_ely_nominal * ts);
      VarRef z = m.add_max_zero(acc, strf("zov%d", n));
      m.set_bounds(z, 0.0, costs.e_overload_max);
      h.z_over.push_back(z);
      h.j_overload += z * costs.overload_weight;
      e_prev = z;
      h.e_over.push_back(e_prev);
    }
  }

  if (costs.water_cost)
    for (int n = 0; n < n_steps; ++n)
      h.j_water += h.mdot_ely[static_cast<size_t>(n)] * (costs.c_water_per_kg * grid.step(n));

  m.add_objective(h.j_grid);
  m.add_objective(h.j_peak);
  m.add_objective(h.j_startup);
  m.add_objective(h.j_user);
  m.add_objective(h.j_co2);
  m.add_objective(h.j_soft);
  m.add_objective(h.j_alloc);
  m.add_objective(h.j_overload);
  m.add_objective(h.j_water);
  return out;
}

struct CostBreakdown {
  double grid = 0, peak = 0, startup = 0, user = 0, co2 = 0, soft = 0, alloc = 0,
         overload = 0, water = 0;
  double total() const {
    return grid + peak + startup + user + co2 + soft + alloc + overload + water;
  }
};

struct Plan {
  std::vector<char> b_ely_on, b_tilde, b_lpmp, b_pr;
  std::vector<double> p_ely_kw, mdot_ely, mdot_lpmp, p_comp_kw, p_grid_kw, mdot_fuel, z_fuel;
  std::vector<double> m_lp, m_mp;  // N+1
  CostBreakdown costs;
  double objective = 0.0;
  double gap = 0.0;
  SolveStatus status = SolveStatus::optimal;
};

inline Plan extract_plan(const Solution& sol, const OcpHandles& h, const HorizonGrid& grid) {
  if (!sol.feasible()) throw Error("extract_plan: no usable solution");
  const int n_steps = grid.n();

  auto as_bool = [&](VarRef v) {
    const double x = sol.value(v);
    if (std::fabs(x - std::round(x)) > 1e-6)
      throw Error(strf("extract_plan: binary value %.9g is not integral", x));
    return std::round(x) != 0.0;
  };

  Plan plan;
  plan.status = sol.status;
  plan.gap = sol.gap;
  plan.objective = sol.objective;
  for (int n = 0; n < n_steps; ++n) {
    const size_t i = static_cast<size_t>(n);
    plan.b_ely_on.push_back(as_bool(h.b_ely[i]) ? 1 : 0);
    plan.b_tilde.push_back(as_bool(h.b_tilde[i]) ? 1 : 0);
    plan.b_lpmp.push_back(as_bool(h.b_lpmp[i]) ? 1 : 0);
    plan.b_pr.push_back(as_bool(h.b_pr[i]) ? 1 : 0);
    plan.p_ely_kw.push_back(sol.value(h.p_ely[i]));
    plan.mdot_ely.push_back(sol.value(h.mdot_ely[i]));
    plan.mdot_lpmp.push_back(sol.value(h.mdot_lpmp[i]));
    plan.p_comp_kw.push_back(sol.value(h.p_comp[i]));
    plan.p_grid_kw.push_back(sol.value(h.p_grid[i]));
    plan.mdot_fuel.push_back(sol.value(h.mdot_fuel[i]));
    plan.z_fuel.push_back(sol.value(h.z_fuel[i]));
  }
  for (int n = 0; n <= n_steps; ++n) {
    plan.m_lp.push_back(sol.value(h.m_lp[static_cast<size_t>(n)]));
    plan.m_mp.push_back(sol.value(h.m_mp[static_cast<size_t>(n)]));
  }

  plan.costs.grid = h.j_grid.evaluate(sol.values);
  plan.costs.peak = h.j_peak.evaluate(sol.values);
  plan.costs.startup = h.j_startup.evaluate(sol.values);
  plan.costs.user = h.j_user.evaluate(sol.values);
  plan.costs.co2 = h.j_co2.evaluate(sol.values);
  plan.costs.soft = h.j_soft.evaluate(sol.values);
  plan.costs.alloc = h.j_alloc.evaluate(sol.values);
  plan.costs.overload = h.j_overload.evaluate(sol.values);
  plan.costs.water = h.j_water.evaluate(sol.values);
  if (std::fabs(plan.costs.total() - sol.objective) > 1e-5)
    throw Error(strf("extract_plan: cost breakdown %.9g != objective %.9g",
                     plan.costs.total(), sol.objective));
  return plan;
}

}  // namespace h2ems
