#pragma once
// MILP model builder: variables, linear constraints, the encoding blocks the
// OCP needs (epigraph max terms, big-M gating, logical AND/OR), fixed-format
// MPS export, and a feasibility re-check that does not trust the solver.
// Solving itself happens behind the Solver interface (solver.hpp).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "h2ems/common.hpp"

namespace h2ems {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { continuous, binary };

struct VarRef {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct LinTerm {
  int var_id;
  double coeff;
};

class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double c) : constant_(c) {}
  LinExpr(VarRef v) { add(v, 1.0); }

  LinExpr& add(VarRef v, double coeff) {
    if (!v.valid()) throw Error("LinExpr: invalid variable handle");
    terms_.push_back({v.id, coeff});
    return *this;
  }

  LinExpr& operator+=(const LinExpr& o) {
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    constant_ += o.constant_;
    return *this;
  }
  LinExpr& operator-=(const LinExpr& o) {
    for (const auto& t : o.terms_) terms_.push_back({t.var_id, -t.coeff});
    constant_ -= o.constant_;
    return *this;
  }
  LinExpr& operator*=(double s) {
    for (auto& t : terms_) t.coeff *= s;
    constant_ *= s;
    return *this;
  }

  // Merge duplicate variables, drop zero coefficients, order by id.
  void normalize() {
    std::sort(terms_.begin(), terms_.end(),
              [](const LinTerm& a, const LinTerm& b) { return a.var_id < b.var_id; });
    std::vector<LinTerm> merged;
    merged.reserve(terms_.size());
    for (const auto& t : terms_) {
      if (!merged.empty() && merged.back().var_id == t.var_id)
        merged.back().coeff += t.coeff;
      else
        merged.push_back(t);
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const LinTerm& t) { return t.coeff == 0.0; }),
                 merged.end());
    terms_ = std::move(merged);
  }

  double evaluate(const std::vector<double>& values) const {
    double s = constant_;
    for (const auto& t : terms_) {
      if (t.var_id < 0 || t.var_id >= static_cast<int>(values.size()))
        throw Error("LinExpr::evaluate: variable id out of range");
      s += t.coeff * values[static_cast<size_t>(t.var_id)];
    }
    return s;
  }

  const std::vector<LinTerm>& terms() const { return terms_; }
  double constant() const { return constant_; }
  void set_constant(double c) { constant_ = c; }
  bool empty() const { return terms_.empty(); }

 private:
  std::vector<LinTerm> terms_;
  double constant_ = 0.0;
};

inline LinExpr operator*(VarRef v, double s) { return LinExpr().add(v, s); }
inline LinExpr operator*(double s, VarRef v) { return LinExpr().add(v, s); }
inline LinExpr operator*(LinExpr e, double s) { return e *= s; }
inline LinExpr operator*(double s, LinExpr e) { return e *= s; }
inline LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
inline LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
inline LinExpr operator-(const LinExpr& a) {
  LinExpr r;
  r -= a;
  return r;
}

enum class Sense { le, eq, ge };

struct Constraint {
  LinExpr expr;  // constant folded into rhs at add time
  Sense sense;
  double rhs;
  std::string tag;
};

struct Violation {
  std::string where;
  double amount;
};

struct SolverConfig {
  double time_limit_s = 20.0;
  double rel_gap = 1e-4;
  int seed = 0;
};

enum class SolveStatus { optimal, feasible_gap, infeasible, timeout_no_solution };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible_gap: return "feasible_gap";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::timeout_no_solution: return "timeout_no_solution";
  }
  return "?";
}

struct Solution {
  SolveStatus status = SolveStatus::timeout_no_solution;
  std::vector<double> values;  // indexed by variable id; set when feasible
  double objective = 0.0;
  double gap = 0.0;

  bool feasible() const {
    return status == SolveStatus::optimal || status == SolveStatus::feasible_gap;
  }
  double value(VarRef v) const {
    if (!v.valid() || v.id >= static_cast<int>(values.size()))
      throw Error("Solution::value: missing value for variable");
    return values[static_cast<size_t>(v.id)];
  }
};

class MilpModel {
 public:
  VarRef add_continuous(double lb, double ub, const std::string& name = "") {
    if (!(lb <= ub)) throw Error(strf("variable '%s': lower %g > upper %g", name.c_str(), lb, ub));
    vars_.push_back({VarKind::continuous, lb, ub, name});
    return {static_cast<int>(vars_.size()) - 1};
  }

  VarRef add_binary(const std::string& name = "") {
    vars_.push_back({VarKind::binary, 0.0, 1.0, name});
    return {static_cast<int>(vars_.size()) - 1};
  }

  void set_bounds(VarRef v, double lb, double ub) {
    VarData& d = var(v);
    if (!(lb <= ub)) throw Error(strf("set_bounds '%s': lower %g > upper %g", d.name.c_str(), lb, ub));
    if (d.kind == VarKind::binary && (lb < 0.0 || ub > 1.0))
      throw Error(strf("set_bounds '%s': binary bounds outside [0,1]", d.name.c_str()));
    d.lb = lb;
    d.ub = ub;
  }

  void fix(VarRef v, double value) { set_bounds(v, value, value); }

  double lower(VarRef v) const { return var(v).lb; }
  double upper(VarRef v) const { return var(v).ub; }
  VarKind kind(VarRef v) const { return var(v).kind; }
  const std::string& name(VarRef v) const { return var(v).name; }

  void add_constraint(LinExpr expr, Sense sense, double rhs, const std::string& tag) {
    expr.normalize();
    for (const auto& t : expr.terms()) check_registered(t.var_id, "constraint " + tag);
    rhs -= expr.constant();
    expr.set_constant(0.0);
    std::string t = tag.empty() ? strf("c%zu", cons_.size()) : tag;
    if (!tags_.insert(t).second) throw Error("duplicate constraint tag: " + t);
    cons_.push_back({std::move(expr), sense, rhs, std::move(t)});
  }

  void add_objective(const LinExpr& e) {
    for (const auto& t : e.terms()) check_registered(t.var_id, "objective");
    objective_ += e;
  }

  LinExpr objective() const {
    LinExpr o = objective_;
    o.normalize();
    return o;
  }

  int num_vars() const { return static_cast<int>(vars_.size()); }
  int num_constraints() const { return static_cast<int>(cons_.size()); }
  const std::vector<Constraint>& constraints() const { return cons_; }

  // ---- encoding blocks ----

  // z >= expr, z >= 0. At any optimum that weights z positively, z = max(0, expr).
  VarRef add_max_zero(const LinExpr& expr, const std::string& name) {
    auto [lo, hi] = expr_bounds(expr);
    (void)lo;
    VarRef z = add_continuous(0.0, hi < kInf ? std::max(0.0, hi) : kInf, name);
    LinExpr c = LinExpr(z) - expr;
    add_constraint(std::move(c), Sense::ge, 0.0, name + ":lb");
    return z;
  }

  // z >= e for every e; with positive weight, z = max over the expressions.
  VarRef add_max_over(const std::vector<LinExpr>& exprs, const std::string& name) {
    if (exprs.empty()) throw Error("add_max_over: empty expression list");
    double lo = -kInf, hi = -kInf;
    for (const auto& e : exprs) {
      auto [l, h] = expr_bounds(e);
      lo = std::max(lo, l);
      hi = std::max(hi, h);
    }
    VarRef z = add_continuous(lo, hi, name);
    for (size_t i = 0; i < exprs.size(); ++i)
      add_constraint(LinExpr(z) - exprs[i], Sense::ge, 0.0, strf("%s:lb%zu", name.c_str(), i));
    return z;
  }

  // y = b*x for binary b and continuous x in [0, M]; M is x's upper bound.
  VarRef gate_product(VarRef gate, VarRef x, const std::string& name) {
    if (kind(gate) != VarKind::binary) throw Error("gate_product: gate must be binary");
    const double m = upper(x);
    if (!(m < kInf)) throw Error(strf("gate_product '%s': x is unbounded above", name.c_str()));
    if (lower(x) < 0.0) throw Error(strf("gate_product '%s': x may be negative", name.c_str()));
    VarRef y = add_continuous(0.0, m, name);
    add_constraint(LinExpr(y) - gate * m, Sense::le, 0.0, name + ":on");
    add_constraint(LinExpr(y) - LinExpr(x), Sense::le, 0.0, name + ":cap");
    add_constraint(LinExpr(y) - LinExpr(x) - gate * m, Sense::ge, -m, name + ":floor");
    return y;
  }

  // Binary y with y = AND(xs): 0 <= sum(x) - z*y <= z-1.
  void logical_and(VarRef y, const std::vector<VarRef>& xs, const std::string& tag) {
    require_binary_gate(y, xs, "logical_and");
    const double z = static_cast<double>(xs.size());
    LinExpr sum;
    for (VarRef x : xs) sum += LinExpr(x);
    add_constraint(sum - y * z, Sense::ge, 0.0, tag + ":lo");
    add_constraint(sum - y * z, Sense::le, z - 1.0, tag + ":hi");
  }

  // Binary y with y = OR(xs): 0 <= z*y - sum(x) <= z-1.
  void logical_or(VarRef y, const std::vector<VarRef>& xs, const std::string& tag) {
    require_binary_gate(y, xs, "logical_or");
    const double z = static_cast<double>(xs.size());
    LinExpr sum;
    for (VarRef x : xs) sum += LinExpr(x);
    add_constraint(y * z - sum, Sense::ge, 0.0, tag + ":lo");
    add_constraint(y * z - sum, Sense::le, z - 1.0, tag + ":hi");
  }

  // ---- diagnostics ----

  // Interval of an expression implied by variable bounds.
  std::pair<double, double> expr_bounds(const LinExpr& e) const {
    LinExpr n = e;
    n.normalize();
    double lo = n.constant(), hi = n.constant();
    for (const auto& t : n.terms()) {
      const VarData& d = var({t.var_id});
      const double a = t.coeff * d.lb, b = t.coeff * d.ub;
      lo += std::min(a, b);
      hi += std::max(a, b);
    }
    return {lo, hi};
  }

  double objective_value(const std::vector<double>& values) const {
    return objective_.evaluate(values);
  }

  // Re-check every bound, integrality, and constraint against a candidate
  // solution; the solver's word is never taken for it.
  std::vector<Violation> check_feasibility(const std::vector<double>& values,
                                           double tol = 1e-6) const {
    std::vector<Violation> out;
    if (values.size() != vars_.size()) {
      out.push_back({"value vector size", std::fabs(double(values.size()) - double(vars_.size()))});
      return out;
    }
    for (size_t i = 0; i < vars_.size(); ++i) {
      const VarData& d = vars_[i];
      const double v = values[i];
      if (v < d.lb - tol) out.push_back({"bound(lo):" + var_label(i), d.lb - v});
      if (v > d.ub + tol) out.push_back({"bound(hi):" + var_label(i), v - d.ub});
      if (d.kind == VarKind::binary && std::fabs(v - std::round(v)) > tol)
        out.push_back({"integrality:" + var_label(i), std::fabs(v - std::round(v))});
    }
    for (const auto& c : cons_) {
      const double a = c.expr.evaluate(values);
      double viol = 0.0;
      switch (c.sense) {
        case Sense::le: viol = a - c.rhs; break;
        case Sense::ge: viol = c.rhs - a; break;
        case Sense::eq: viol = std::fabs(a - c.rhs); break;
      }
      if (viol > tol) out.push_back({c.tag, viol});
    }
    return out;
  }

  // ---- export ----

  // Fixed-format MPS. Columns/rows get deterministic 8-char names from their
  // ids; every variable appears in COLUMNS (a zero objective entry guarantees
  // registration); the objective constant rides on the RHS of the cost row.
  std::string export_mps(const std::string& model_name = "H2EMS") const {
    std::string s;
    s.reserve(256 + vars_.size() * 48 + cons_.size() * 40);
    s += "NAME          " + model_name + "\n";
    s += "ROWS\n";
    s += " N  COST\n";
    for (size_t i = 0; i < cons_.size(); ++i) {
      const char* sn = cons_[i].sense == Sense::le ? "L" : cons_[i].sense == Sense::ge ? "G" : "E";
      s += strf(" %s  %s\n", sn, row_name(i).c_str());
    }

    // per-column entries: objective first, then constraints in row order
    LinExpr obj = objective();
    std::vector<double> obj_coeff(vars_.size(), 0.0);
    for (const auto& t : obj.terms()) obj_coeff[static_cast<size_t>(t.var_id)] = t.coeff;
    std::vector<std::vector<std::pair<size_t, double>>> col_entries(vars_.size());
    for (size_t r = 0; r < cons_.size(); ++r)
      for (const auto& t : cons_[r].expr.terms())
        col_entries[static_cast<size_t>(t.var_id)].push_back({r, t.coeff});

    s += "COLUMNS\n";
    bool in_int = false;
    int marker = 0;
    for (size_t i = 0; i < vars_.size(); ++i) {
      const bool want_int = vars_[i].kind == VarKind::binary;
      if (want_int != in_int) {
        s += strf("    MARKER%02d  'MARKER'                 '%s'\n", marker++,
                  want_int ? "INTORG" : "INTEND");
        in_int = want_int;
      }
      std::vector<std::pair<std::string, double>> fields;
      fields.push_back({"COST", obj_coeff[i]});
      for (const auto& [r, c] : col_entries[i]) fields.push_back({row_name(r), c});
      emit_pairs(s, col_name(i), fields);
    }
    if (in_int) s += strf("    MARKER%02d  'MARKER'                 'INTEND'\n", marker++);

    s += "RHS\n";
    {
      std::vector<std::pair<std::string, double>> fields;
      if (obj.constant() != 0.0) fields.push_back({"COST", -obj.constant()});
      for (size_t r = 0; r < cons_.size(); ++r)
        if (cons_[r].rhs != 0.0) fields.push_back({row_name(r), cons_[r].rhs});
      emit_pairs(s, "RHS", fields);
    }

    s += "BOUNDS\n";
    for (size_t i = 0; i < vars_.size(); ++i) {
      const VarData& d = vars_[i];
      const std::string cn = col_name(i);
      if (d.kind == VarKind::binary) {
        s += strf(" LO BND       %-8s  %s\n", cn.c_str(), num(d.lb).c_str());
        s += strf(" UP BND       %-8s  %s\n", cn.c_str(), num(d.ub).c_str());
        continue;
      }
      if (d.lb == d.ub) {
        s += strf(" FX BND       %-8s  %s\n", cn.c_str(), num(d.lb).c_str());
        continue;
      }
      if (d.lb == -kInf && d.ub == kInf) {
        s += strf(" FR BND       %-8s\n", cn.c_str());
        continue;
      }
      if (d.lb == -kInf)
        s += strf(" MI BND       %-8s\n", cn.c_str());
      else if (d.lb != 0.0)
        s += strf(" LO BND       %-8s  %s\n", cn.c_str(), num(d.lb).c_str());
      if (d.ub != kInf)
        s += strf(" UP BND       %-8s  %s\n", cn.c_str(), num(d.ub).c_str());
    }
    s += "ENDATA\n";
    return s;
  }

  static std::string col_name(size_t id) { return strf("x%07zu", id); }
  static std::string row_name(size_t id) { return strf("c%07zu", id); }

 private:
  struct VarData {
    VarKind kind;
    double lb, ub;
    std::string name;
  };

  VarData& var(VarRef v) {
    if (!v.valid() || v.id >= num_vars()) throw Error("unregistered variable handle");
    return vars_[static_cast<size_t>(v.id)];
  }
  const VarData& var(VarRef v) const {
    if (!v.valid() || v.id >= num_vars()) throw Error("unregistered variable handle");
    return vars_[static_cast<size_t>(v.id)];
  }

  std::string var_label(size_t i) const {
    return vars_[i].name.empty() ? col_name(i) : vars_[i].name;
  }

  void check_registered(int id, const std::string& where) const {
    if (id < 0 || id >= num_vars())
      throw Error("unregistered variable referenced in " + where);
  }

  void require_binary_gate(VarRef y, const std::vector<VarRef>& xs, const char* op) const {
    if (xs.empty()) throw Error(std::string(op) + ": empty input list");
    if (kind(y) != VarKind::binary) throw Error(std::string(op) + ": output must be binary");
    for (VarRef x : xs)
      if (kind(x) != VarKind::binary) throw Error(std::string(op) + ": inputs must be binary");
  }

  static std::string num(double v) { return strf("%.17g", v); }

  // classic two-pairs-per-line COLUMNS/RHS layout
  static void emit_pairs(std::string& s, const std::string& head,
                         const std::vector<std::pair<std::string, double>>& fields) {
    for (size_t k = 0; k < fields.size(); k += 2) {
      s += strf("    %-8s  %-8s  %s", head.c_str(), fields[k].first.c_str(),
                num(fields[k].second).c_str());
      if (k + 1 < fields.size())
        s += strf("   %-8s  %s", fields[k + 1].first.c_str(), num(fields[k + 1].second).c_str());
      s += "\n";
    }
  }

  std::vector<VarData> vars_;
  std::vector<Constraint> cons_;
  std::unordered_set<std::string> tags_;
  LinExpr objective_;
};

struct SolveInfo {
  int num_rows = 0;
  int num_cols = 0;
  double solve_time_s = 0.0;
  std::string backend;
};

class Solver {
 public:
  virtual ~Solver() = default;
  // warm, if given, is a full candidate value vector (one entry per variable)
  // handed to the backend as a starting incumbent. Backends without warm-start
  // support ignore it; the result is valid either way.
  virtual Solution solve(const MilpModel& model, const SolverConfig& cfg,
                         SolveInfo* info = nullptr,
                         const std::vector<double>* warm = nullptr) = 0;
};

}  // namespace h2ems
