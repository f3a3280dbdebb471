#pragma once
// Piecewise-linear approximations: closed-form evaluators plus the MILP
// encodings that embed the same surfaces in an optimization model. 1D maps
// use the lambda/delta convex-combination form with one binary per
// breakpoint; 2D maps use the triangle method with two binaries per grid
// rectangle. No extrapolation: evaluating outside the breakpoint hull throws.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "h2ems/common.hpp"
#include "h2ems/milp.hpp"

namespace h2ems {

struct Map1d {
  std::vector<double> x;
  std::vector<double> y;

  void validate() const {
    if (x.size() != y.size()) throw ConfigError("Map1d: x/y size mismatch");
    if (x.size() < 2) throw ConfigError("Map1d: need at least two breakpoints");
    for (size_t i = 0; i < x.size(); ++i)
      if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
        throw ConfigError("Map1d: non-finite breakpoint");
    for (size_t i = 1; i < x.size(); ++i)
      if (!(x[i] > x[i - 1])) throw ConfigError("Map1d: x must be strictly increasing");
  }

  double min_y() const { return *std::min_element(y.begin(), y.end()); }
  double max_y() const { return *std::max_element(y.begin(), y.end()); }
};

struct Map2d {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::vector<double>> z;  // z[i][j] over (x[i], y[j])

  void validate() const {
    if (x.size() < 2 || y.size() < 2) throw ConfigError("Map2d: need a 2x2 grid at least");
    if (z.size() != x.size()) throw ConfigError("Map2d: z row count != x size");
    for (const auto& row : z)
      if (row.size() != y.size()) throw ConfigError("Map2d: z column count != y size");
    for (size_t i = 1; i < x.size(); ++i)
      if (!(x[i] > x[i - 1])) throw ConfigError("Map2d: x must be strictly increasing");
    for (size_t j = 1; j < y.size(); ++j)
      if (!(y[j] > y[j - 1])) throw ConfigError("Map2d: y must be strictly increasing");
    for (const auto& row : z)
      for (double v : row)
        if (!std::isfinite(v)) throw ConfigError("Map2d: non-finite value");
  }

  double min_z() const {
    double m = z[0][0];
    for (const auto& row : z) m = std::min(m, *std::min_element(row.begin(), row.end()));
    return m;
  }
  double max_z() const {
    double m = z[0][0];
    for (const auto& row : z) m = std::max(m, *std::max_element(row.begin(), row.end()));
    return m;
  }
};

namespace detail {

// Clamp v into [lo, hi] allowing a hair of numerical slack; throw beyond it.
inline double clamp_into(double v, double lo, double hi, const char* what) {
  const double tol = 1e-9 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
  if (v < lo - tol || v > hi + tol)
    throw Error(strf("%s: value %.12g outside [%.12g, %.12g]", what, v, lo, hi));
  return std::min(std::max(v, lo), hi);
}

// Index i of the cell [x_i, x_{i+1}] containing v; the top edge maps to the
// last cell.
inline size_t locate(const std::vector<double>& xs, double v) {
  size_t i = static_cast<size_t>(std::upper_bound(xs.begin(), xs.end(), v) - xs.begin());
  if (i > 0) --i;
  return std::min(i, xs.size() - 2);
}

}  // namespace detail

inline double eval1d(const Map1d& map, double x) {
  map.validate();
  const double xc = detail::clamp_into(x, map.x.front(), map.x.back(), "eval1d");
  const size_t i = detail::locate(map.x, xc);
  const double t = (xc - map.x[i]) / (map.x[i + 1] - map.x[i]);
  return map.y[i] + t * (map.y[i + 1] - map.y[i]);
}

inline double eval2d(const Map2d& map, double x, double y) {
  map.validate();
  const double xc = detail::clamp_into(x, map.x.front(), map.x.back(), "eval2d(x)");
  const double yc = detail::clamp_into(y, map.y.front(), map.y.back(), "eval2d(y)");
  const size_t i = detail::locate(map.x, xc);
  const size_t j = detail::locate(map.y, yc);
  const double u = (xc - map.x[i]) / (map.x[i + 1] - map.x[i]);
  const double v = (yc - map.y[j]) / (map.y[j + 1] - map.y[j]);
  const double z00 = map.z[i][j], z10 = map.z[i + 1][j];
  const double z01 = map.z[i][j + 1], z11 = map.z[i + 1][j + 1];
  if (v >= u)  // upper triangle of the diagonal (i,j)-(i+1,j+1)
    return z00 + u * (z11 - z01) + v * (z01 - z00);
  return z00 + u * (z10 - z00) + v * (z11 - z10);
}

// Swap axes; only meaningful for strictly monotone maps.
inline Map1d inverted(const Map1d& map) {
  map.validate();
  for (size_t i = 1; i < map.y.size(); ++i)
    if (!(map.y[i] > map.y[i - 1]))
      throw ConfigError("inverted: y must be strictly increasing to invert");
  return Map1d{map.y, map.x};
}

namespace detail {

// Collinear breakpoints (any two-point map included) need no segment
// selection; the interpolant is one affine row.
inline bool collinear(const Map1d& map) {
  const double g = (map.y.back() - map.y.front()) / (map.x.back() - map.x.front());
  const double tol = 1e-12 * std::max({1.0, std::fabs(map.min_y()), std::fabs(map.max_y())});
  for (size_t i = 0; i < map.x.size(); ++i)
    if (std::fabs(map.y[i] - (map.y.front() + g * (map.x[i] - map.x.front()))) > tol)
      return false;
  return true;
}

// True when the surface is one plane, in which case both triangle
// orientations reproduce it and the combinatorial encoding is dead weight.
inline bool planar(const Map2d& map) {
  const double z00 = map.z[0][0];
  const double gx = (map.z[1][0] - z00) / (map.x[1] - map.x[0]);
  const double gy = (map.z[0][1] - z00) / (map.y[1] - map.y[0]);
  const double tol = 1e-12 * std::max({1.0, std::fabs(map.min_z()), std::fabs(map.max_z())});
  for (size_t i = 0; i < map.x.size(); ++i)
    for (size_t j = 0; j < map.y.size(); ++j)
      if (std::fabs(map.z[i][j] -
                    (z00 + gx * (map.x[i] - map.x[0]) + gy * (map.y[j] - map.y[0]))) > tol)
        return false;
  return true;
}

}  // namespace detail

// Embed y = f(x) with lambda weights per breakpoint and one binary per
// breakpoint (the last one covers the degenerate top point). Also confines x
// to the breakpoint hull.
inline VarRef emit1d(MilpModel& m, const Map1d& map, const LinExpr& x, const std::string& name) {
  map.validate();
  if (detail::collinear(map)) {
    const double g = (map.y.back() - map.y.front()) / (map.x.back() - map.x.front());
    m.add_constraint(x, Sense::ge, map.x.front(), name + ":xlo");
    m.add_constraint(x, Sense::le, map.x.back(), name + ":xhi");
    VarRef y = m.add_continuous(map.min_y(), map.max_y(), name);
    m.add_constraint(LinExpr(y) - x * g, Sense::eq, map.y.front() - g * map.x.front(),
                     name + ":y");
    return y;
  }
  const size_t n = map.x.size();
  std::vector<VarRef> lam(n), del(n);
  for (size_t i = 0; i < n; ++i) {
    lam[i] = m.add_continuous(0.0, 1.0, strf("%s:lam%zu", name.c_str(), i));
    del[i] = m.add_binary(strf("%s:del%zu", name.c_str(), i));
  }
  LinExpr lsum, dsum, xs, ys;
  for (size_t i = 0; i < n; ++i) {
    lsum += LinExpr(lam[i]);
    dsum += LinExpr(del[i]);
    xs += lam[i] * map.x[i];
    ys += lam[i] * map.y[i];
  }
  m.add_constraint(std::move(lsum), Sense::eq, 1.0, name + ":lsum");
  m.add_constraint(std::move(dsum), Sense::eq, 1.0, name + ":dsum");
  for (size_t i = 0; i < n; ++i) {
    LinExpr c = LinExpr(lam[i]) - LinExpr(del[i]);
    if (i > 0) c -= LinExpr(del[i - 1]);
    m.add_constraint(std::move(c), Sense::le, 0.0, strf("%s:supp%zu", name.c_str(), i));
  }
  m.add_constraint(xs - x, Sense::eq, 0.0, name + ":x");
  VarRef y = m.add_continuous(map.min_y(), map.max_y(), name);
  m.add_constraint(ys - LinExpr(y), Sense::eq, 0.0, name + ":y");
  return y;
}

// Embed z = f(x, y) with alpha weights on grid vertices and two triangle
// binaries per rectangle; the active triangle's vertices carry all weight.
inline VarRef emit2d(MilpModel& m, const Map2d& map, const LinExpr& x, const LinExpr& y,
                     const std::string& name) {
  map.validate();
  if (detail::planar(map)) {
    const double gx = (map.z[1][0] - map.z[0][0]) / (map.x[1] - map.x[0]);
    const double gy = (map.z[0][1] - map.z[0][0]) / (map.y[1] - map.y[0]);
    m.add_constraint(x, Sense::ge, map.x.front(), name + ":xlo");
    m.add_constraint(x, Sense::le, map.x.back(), name + ":xhi");
    m.add_constraint(y, Sense::ge, map.y.front(), name + ":ylo");
    m.add_constraint(y, Sense::le, map.y.back(), name + ":yhi");
    VarRef z = m.add_continuous(map.min_z(), map.max_z(), name);
    m.add_constraint(LinExpr(z) - x * gx - y * gy, Sense::eq,
                     map.z[0][0] - gx * map.x[0] - gy * map.y[0], name + ":z");
    return z;
  }
  const size_t nx = map.x.size(), ny = map.y.size();
  std::vector<std::vector<VarRef>> alpha(nx, std::vector<VarRef>(ny));
  std::vector<std::vector<VarRef>> hu(nx - 1, std::vector<VarRef>(ny - 1));
  std::vector<std::vector<VarRef>> hl(nx - 1, std::vector<VarRef>(ny - 1));
  for (size_t i = 0; i < nx; ++i)
    for (size_t j = 0; j < ny; ++j)
      alpha[i][j] = m.add_continuous(0.0, 1.0, strf("%s:a%zu_%zu", name.c_str(), i, j));
  for (size_t r = 0; r + 1 < nx; ++r)
    for (size_t s = 0; s + 1 < ny; ++s) {
      hu[r][s] = m.add_binary(strf("%s:hu%zu_%zu", name.c_str(), r, s));
      hl[r][s] = m.add_binary(strf("%s:hl%zu_%zu", name.c_str(), r, s));
    }

  LinExpr asum, hsum, xs, ys, zs;
  for (size_t i = 0; i < nx; ++i)
    for (size_t j = 0; j < ny; ++j) {
      asum += LinExpr(alpha[i][j]);
      xs += alpha[i][j] * map.x[i];
      ys += alpha[i][j] * map.y[j];
      zs += alpha[i][j] * map.z[i][j];
    }
  for (size_t r = 0; r + 1 < nx; ++r)
    for (size_t s = 0; s + 1 < ny; ++s) {
      hsum += LinExpr(hu[r][s]);
      hsum += LinExpr(hl[r][s]);
    }
  m.add_constraint(std::move(asum), Sense::eq, 1.0, name + ":asum");
  m.add_constraint(std::move(hsum), Sense::eq, 1.0, name + ":hsum");

  // Upper triangle of rect (r,s) covers vertices (r,s),(r,s+1),(r+1,s+1);
  // lower covers (r,s),(r+1,s),(r+1,s+1).
  for (size_t i = 0; i < nx; ++i)
    for (size_t j = 0; j < ny; ++j) {
      LinExpr c = LinExpr(alpha[i][j]);
      if (i + 1 < nx && j + 1 < ny) {
        c -= LinExpr(hu[i][j]);
        c -= LinExpr(hl[i][j]);
      }
      if (i + 1 < nx && j >= 1) c -= LinExpr(hu[i][j - 1]);
      if (i >= 1 && j >= 1) {
        c -= LinExpr(hu[i - 1][j - 1]);
        c -= LinExpr(hl[i - 1][j - 1]);
      }
      if (i >= 1 && j + 1 < ny) c -= LinExpr(hl[i - 1][j]);
      m.add_constraint(std::move(c), Sense::le, 0.0, strf("%s:supp%zu_%zu", name.c_str(), i, j));
    }

  m.add_constraint(xs - x, Sense::eq, 0.0, name + ":x");
  m.add_constraint(ys - y, Sense::eq, 0.0, name + ":y");
  VarRef z = m.add_continuous(map.min_z(), map.max_z(), name);
  m.add_constraint(zs - LinExpr(z), Sense::eq, 0.0, name + ":z");
  return z;
}

}  // namespace h2ems
