#pragma once
// Plan validation and constraint allocation. The OCP only sees the aggregated
// MP mass, but refueling succeeds or fails per tank; the allocator rolls the
// plan out on the six-tank model, finds the steps where delivery would fall
// short, and emits the recovery-duration and mass-floor parameters for one
// corrective re-solve.

#include <algorithm>
#include <optional>
#include <vector>

#include "h2ems/ocp.hpp"
#include "h2ems/plant.hpp"

namespace h2ems {

// Rollout diagnostics kept alongside the emitted constraints; the trace
// logger wants n_fm and the clip flag, not just the constraint payload.
struct PlanCheck {
  std::vector<double> mismatch_kg;  // per step: planned minus deliverable
  double total_mismatch_kg = 0.0;
  int n_fm = -1;                    // first shortfall step, -1 when clean
  double m_available_pr_kg = 0.0;   // movable donor mass entering n_fm
  double m_move_kg = 0.0;           // mass the recovery run should shift
  bool t_pr_clipped = false;        // consider window shorter than t_pr wants
  std::optional<AllocatorConstraints> constraints;
};

namespace detail {

// Mass the recovery compressor could move at this state: donor headroom above
// the per-tank floors, bounded by receiver cap headroom. Equal sections mean
// the plant will not run recovery at all.
inline double pr_available(const PlantState& s, const PlantParams& p) {
  const auto [ma, mb] = section_masses(s, p);
  if (ma == mb) return 0.0;
  const int half = p.section_size();
  const int donor0 = ma < mb ? 0 : half;
  const int recv0 = ma < mb ? half : 0;
  double donor = 0.0, recv = 0.0;
  for (int i = 0; i < half; ++i) {
    donor += std::max(0.0, s.mp[static_cast<size_t>(donor0 + i)] - p.mp_tank_floor);
    recv += std::max(0.0, p.mp_tank_cap - s.mp[static_cast<size_t>(recv0 + i)]);
  }
  return std::min(donor, recv);
}

// Upper bound on the aggregated MP mass reachable t_n hours from now: what is
// already stored, plus the LP inventory and flat-out production (after any
// remaining warm-up), all limited by the transfer rate and the tank caps.
inline double mp_possible(const PlantState& s, const PlantParams& p, double t_n) {
  double warm_rem = p.t_startup_h;
  if (s.ely_on) warm_rem = std::max(0.0, p.t_startup_h - s.warmup_elapsed_h);
  const double prod = eval1d(p.ely_map, p.p_ely_max) * std::max(0.0, t_n - warm_rem);
  const double lp_avail = std::max(0.0, s.m_lp - p.m_lp_min);
  const double inflow = std::min(lp_avail + prod, p.flow_map.max_y() * t_n);
  return std::min(s.mp_total() + inflow, p.n_mp_tanks * p.mp_tank_cap);
}

}  // namespace detail

inline PlanCheck analyze_plan(const Plan& plan, const PlantState& state,
                              const PlantParams& p, const HorizonGrid& grid) {
  validate_state(state, p);
  const int n_steps = grid.n();
  if (static_cast<int>(plan.mdot_fuel.size()) != n_steps)
    throw Error(strf("analyze_plan: plan has %zu steps, horizon %d", plan.mdot_fuel.size(),
                     n_steps));

  PlanCheck r;
  r.mismatch_kg.assign(static_cast<size_t>(n_steps), 0.0);
  std::vector<PlantState> entering;  // state at the start of each step
  entering.reserve(static_cast<size_t>(n_steps));
  PlantState s = state;
  for (int n = 0; n < n_steps; ++n) {
    const size_t i = static_cast<size_t>(n);
    entering.push_back(s);
    AppliedInput u{plan.b_ely_on[i] != 0, plan.p_ely_kw[i], plan.b_lpmp[i] != 0,
                   plan.b_pr[i] != 0, plan.mdot_fuel[i]};
    StepOutcome o = step(s, u, grid.step(n), p);
    double miss = plan.mdot_fuel[i] * grid.step(n) - o.delivered_kg;
    if (miss < 1e-9) miss = 0.0;  // solver-tolerance noise is not a shortfall
    r.mismatch_kg[i] = miss;
    r.total_mismatch_kg += miss;
    if (miss > 0 && r.n_fm < 0) r.n_fm = n;
    s = o.state;
  }
  if (r.n_fm < 0) return r;

  AllocatorConstraints c;
  c.b_consider_pr.assign(static_cast<size_t>(grid.n_cutoff), 0);

  r.m_available_pr_kg = detail::pr_available(entering[static_cast<size_t>(r.n_fm)], p);
  if (r.n_fm <= grid.n_cutoff && r.m_available_pr_kg > 0) {
    double window_h = 0.0;
    for (int n = 0; n < r.n_fm && n < grid.n_cutoff; ++n) {
      c.b_consider_pr[static_cast<size_t>(n)] = 1;
      window_h += grid.step(n);
    }
    const auto [ma, mb] = section_masses(entering[static_cast<size_t>(r.n_fm)], p);
    const double higher = std::max(ma, mb);
    const double fuel_kg = plan.mdot_fuel[static_cast<size_t>(r.n_fm)] * grid.step(r.n_fm);
    const double need = std::max(0.0, p.section_size() * p.m_350() - higher) + fuel_kg;
    r.m_move_kg = std::min(r.m_available_pr_kg, need);
    double t_pr = r.m_move_kg / p.mdot_pr_nominal;
    double through_fm = window_h + grid.step(r.n_fm);
    t_pr = std::min(t_pr, through_fm);
    if (t_pr > window_h) {
      // Eq. 22 can only accumulate duration on the considered steps; a longer
      // request would make the re-solve infeasible by construction.
      t_pr = window_h;
      r.t_pr_clipped = true;
    }
    c.t_pr_h = t_pr;
  }

  for (int n = 0; n < n_steps && n < grid.n_cutoff; ++n) {
    const size_t i = static_cast<size_t>(n);
    if (r.mismatch_kg[i] <= 0) continue;
    const double m_poss = detail::mp_possible(state, p, grid.offset_h(n));
    const double lim =
        std::min(m_poss, p.m_mp_350_limit() + plan.mdot_fuel[i] * grid.step(n));
    c.m_mp_lim.push_back({n, lim});
  }

  r.constraints = std::move(c);
  return r;
}

// The spec'd operation: nothing when the rollout delivers every planned kg.
inline std::optional<AllocatorConstraints> check_plan(const Plan& plan, const PlantState& state,
                                                      const PlantParams& p,
                                                      const HorizonGrid& grid) {
  return analyze_plan(plan, state, p, grid).constraints;
}

struct MpcStepResult {
  AppliedInput input;   // first-step command of the plan that won
  Plan plan;            // the applied plan
  Plan first_plan;      // pre-allocator plan (identical when no re-solve ran)
  PlanCheck check;      // rollout verdict on the first plan
  bool resolved = false;
  bool fallback_first = false;  // re-solve failed; first plan applied instead
  std::vector<double> first_solution;  // raw values, next step's warm start
  SolveInfo info1, info2;
};

inline AppliedInput plan_first_input(const Plan& plan) {
  return AppliedInput{plan.b_ely_on[0] != 0, plan.p_ely_kw[0], plan.b_lpmp[0] != 0,
                      plan.b_pr[0] != 0, plan.mdot_fuel[0]};
}

// One MPC control step: solve, validate against the tank model, re-solve at
// most once with the allocator's constraints. A failed re-solve falls back to
// the first plan; soft constraints make that a bug indicator, so it is
// surfaced to the caller rather than silently absorbed.
inline MpcStepResult closed_loop_step(Solver& solver, const PlantParams& p,
                                      const CostParams& costs, const HorizonGrid& grid,
                                      const ForecastSlice& fc, const PlantState& state,
                                      double j_prev_eur, const SolverConfig& cfg,
                                      const std::vector<double>* warm = nullptr) {
  OcpInit init;
  init.m_lp0 = state.m_lp;
  init.m_mp0 = state.mp_total();
  init.on_history = state.on_history;
  init.ely_ready = state.ely_ready(p);
  init.j_prev_eur = j_prev_eur;

  MpcStepResult r;
  OcpBuild b1 = build_ocp(p, costs, grid, fc, init);
  Solution s1 = solver.solve(b1.model, cfg, &r.info1, warm);
  if (!s1.feasible())
    throw SolverError(strf("closed_loop_step: first solve %s", to_string(s1.status)));
  r.first_plan = extract_plan(s1, b1.h, grid);
  r.first_solution = s1.values;
  r.check = analyze_plan(r.first_plan, state, p, grid);
  if (!r.check.constraints) {
    r.plan = r.first_plan;
    r.input = plan_first_input(r.plan);
    return r;
  }

  OcpBuild b2 = build_ocp(p, costs, grid, fc, init, &*r.check.constraints);
  // Warm-start the re-solve from the first plan: base variables carry over
  // verbatim and the allocator slacks are appended last, so the first
  // solution extends positionally. With the overload or water extensions the
  // layouts diverge and the hint is skipped.
  std::vector<double> warm2;
  const std::vector<double>* warm2_ptr = nullptr;
  if (!costs.overload_buffer && !costs.water_cost) {
    warm2 = s1.values;
    for (const auto& [sn, lim] : r.check.constraints->m_mp_lim)
      warm2.push_back(std::max(0.0, lim - s1.value(b1.h.m_mp[static_cast<size_t>(sn)])));
    if (static_cast<int>(warm2.size()) == b2.model.num_vars()) warm2_ptr = &warm2;
  }
  Solution s2 = solver.solve(b2.model, cfg, &r.info2, warm2_ptr);
  if (s2.feasible()) {
    r.plan = extract_plan(s2, b2.h, grid);
    r.resolved = true;
  } else {
    r.plan = r.first_plan;
    r.fallback_first = true;
  }
  r.input = plan_first_input(r.plan);
  return r;
}

}  // namespace h2ems
