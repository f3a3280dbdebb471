#pragma once
// Plant, cost, and horizon parameters with the facility defaults. Everything
// here can be overridden from the JSON config (config.hpp).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "h2ems/common.hpp"
#include "h2ems/pwla.hpp"

namespace h2ems {

struct CostParams {
  double c_buy = 0.144;   // EUR/kWh grid import
  double c_sell = 0.07;   // EUR/kWh feed-in
  double c_peak = 122.07; // EUR/kW on the billing-period maximum import
  double c_startup = 10.0;
  double c_fuel_mismatch = 200.0;  // EUR/kg undelivered fuel
  double c_co2 = 0.02;             // EUR/kWh grid import
  double soft_weight = 0.1;        // tank soft-minimum slack, EUR/kg per hour
  double allocator_slack_weight = 1.0;

  // optional extensions, both disabled by default
  bool overload_buffer = false;
  double p_ely_nominal = 225.0;
  double e_overload_max = 10.0;  // kWh
  double overload_weight = 1e-3;
  bool water_cost = false;
  double c_water_per_kg = 0.0;  // EUR per kg H2 produced

  void validate() const {
    if (c_buy < 0 || c_sell < 0 || c_peak < 0 || c_startup < 0 || c_fuel_mismatch < 0 ||
        c_co2 < 0 || soft_weight < 0 || allocator_slack_weight < 0)
      throw ConfigError("costs: prices and weights must be nonnegative");
    if (c_buy < c_sell) throw ConfigError("costs: c_buy < c_sell would reward import-export loops");
    if (c_buy - c_sell + c_co2 <= 0.0)
      throw ConfigError("costs: need c_buy - c_sell + c_co2 > 0 to pin the import epigraph");
  }
};

struct PlantParams {
  double p_ely_min = 70.0;  // kW
  double p_ely_max = 225.0;
  double t_startup_h = 0.25;
  Map1d ely_map{{0.0, 60.0, 350.0}, {0.0, 1.01, 4.71}};  // kW -> kg/h

  double m_lp_min = 0.5;  // kg
  double m_lp_max = 11.0;
  double m_lp_soft_min = 7.0;

  int n_mp_tanks = 6;  // two sections of three
  double mp_tank_cap = 43.33;  // kg at 450 bar
  double m_mp_min = 60.0;      // aggregate bounds
  double m_mp_max = 260.0;
  double m_mp_soft_min = 151.9;
  double mp_tank_floor = 10.0;  // per-tank heuristic floor

  // LP mass at which a tank sits exactly at the 350 bar dispensing threshold;
  // derived from the tank capacity unless overridden.
  double m_350_override = -1.0;

  Map1d flow_map{{0.0, 7.333, 33.0}, {0.2, 4.2, 18.0}};  // LP mass (kg) -> kg/h
  double p_comp_max = 15.0;  // kW
  double p_comp_pr = 15.0;   // kW, fixed draw in pressure-recovery mode
  double mdot_pr_nominal = 18.0;  // kg/h assumed for recovery-duration sizing
  Map2d comp_map = default_comp_map(15.0);

  // Aggregate MP mass below which a three-tank section can no longer hold
  // every tank above 350 bar; derived unless overridden.
  double m_mp_350_limit_override = -1.0;

  double m_350() const {
    return m_350_override >= 0.0 ? m_350_override : mp_tank_cap * 350.0 / 450.0;
  }

  double m_mp_350_limit() const {
    if (m_mp_350_limit_override >= 0.0) return m_mp_350_limit_override;
    const double half = n_mp_tanks / 2.0;
    return half * m_350() + half * mp_tank_floor;
  }

  int section_size() const { return n_mp_tanks / 2; }

  // The configured aggregate bound is a rounded figure; the tanks themselves
  // are the binding limit, so plans must never target mass they cannot hold.
  double m_mp_max_effective() const {
    return std::min(m_mp_max, n_mp_tanks * mp_tank_cap);
  }

  // Measured power surface unavailable; this stand-in decreases with LP mass
  // (higher suction pressure, less work) and rises with MP backpressure,
  // scaled so its maximum hits p_max.
  static Map2d default_comp_map(double p_max) {
    Map2d m{{0.5, 5.75, 11.0},
            {60.0, 160.0, 260.0},
            {{12.0, 13.5, 15.0}, {10.0, 11.5, 13.0}, {8.0, 9.5, 11.0}}};
    const double scale = p_max / 15.0;
    for (auto& row : m.z)
      for (double& v : row) v *= scale;
    return m;
  }

  void validate() const {
    if (p_ely_min < 0 || p_ely_max < p_ely_min) throw ConfigError("plant: electrolyzer bounds");
    if (t_startup_h < 0) throw ConfigError("plant: t_startup_h < 0");
    ely_map.validate();
    flow_map.validate();
    comp_map.validate();
    if (!(m_lp_min >= 0 && m_lp_min < m_lp_max)) throw ConfigError("plant: LP bounds");
    if (n_mp_tanks < 2 || n_mp_tanks % 2 != 0)
      throw ConfigError("plant: n_mp_tanks must be even and >= 2");
    if (mp_tank_cap <= 0) throw ConfigError("plant: mp_tank_cap <= 0");
    if (!(m_mp_min >= 0 && m_mp_min < m_mp_max_effective()))
      throw ConfigError("plant: MP bounds");
    if (mp_tank_floor < 0 || mp_tank_floor > mp_tank_cap)
      throw ConfigError("plant: mp_tank_floor outside [0, cap]");
    if (m_350() <= 0 || m_350() > mp_tank_cap) throw ConfigError("plant: m_350 outside (0, cap]");
    if (p_comp_max < 0 || p_comp_pr < 0) throw ConfigError("plant: compressor powers");
    if (mdot_pr_nominal <= 0) throw ConfigError("plant: mdot_pr_nominal <= 0");
    if (ely_map.x.front() > 0.0 || ely_map.x.back() < p_ely_max)
      throw ConfigError("plant: ely_map must cover [0, p_ely_max]");
    if (flow_map.x.front() > m_lp_min || flow_map.x.back() < m_lp_max)
      throw ConfigError("plant: flow_map must cover the LP mass range");
    if (comp_map.x.front() > m_lp_min || comp_map.x.back() < m_lp_max ||
        comp_map.y.front() > m_mp_min || comp_map.y.back() < m_mp_max)
      throw ConfigError("plant: comp_map must cover the LP/MP operating box");
  }
};

struct HorizonGrid {
  // 7-day horizon: 5/10/15 min, three half-hours, 22 hours, two half-days,
  // five days.
  std::vector<double> steps_h = default_steps();
  int n_cutoff = 12;  // steps participating in allocator constraints (first 8 h)
  double base_step_h = 1.0 / 12.0;

  static std::vector<double> default_steps() {
    std::vector<double> s{1.0 / 12.0, 1.0 / 6.0, 0.25, 0.5, 0.5, 0.5};
    for (int i = 0; i < 22; ++i) s.push_back(1.0);
    s.push_back(12.0);
    s.push_back(12.0);
    for (int i = 0; i < 5; ++i) s.push_back(24.0);
    return s;
  }

  int n() const { return static_cast<int>(steps_h.size()); }
  double step(int k) const { return steps_h[static_cast<size_t>(k)]; }
  double total_h() const { return std::accumulate(steps_h.begin(), steps_h.end(), 0.0); }

  // start offset of step k from the horizon origin, in hours
  double offset_h(int k) const {
    double t = 0.0;
    for (int i = 0; i < k; ++i) t += steps_h[static_cast<size_t>(i)];
    return t;
  }

  int base_slots(int k) const {
    return static_cast<int>(std::llround(step(k) / base_step_h));
  }

  void validate() const {
    if (steps_h.empty()) throw ConfigError("horizon: no steps");
    if (base_step_h <= 0) throw ConfigError("horizon: base step <= 0");
    for (double s : steps_h) {
      if (s <= 0) throw ConfigError("horizon: nonpositive step");
      const double slots = s / base_step_h;
      if (std::fabs(slots - std::llround(slots)) > 1e-9)
        throw ConfigError("horizon: every step must be a whole number of base slots");
    }
    if (std::fabs(steps_h.front() - base_step_h) > 1e-12)
      throw ConfigError("horizon: first step must equal the base step");
    if (n_cutoff < 1 || n_cutoff > n()) throw ConfigError("horizon: n_cutoff outside [1, N]");
  }
};

}  // namespace h2ems
