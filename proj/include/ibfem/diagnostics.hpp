#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "ibfem/common.hpp"
#include "ibfem/fem.hpp"
#include "ibfem/geometry.hpp"
#include "ibfem/solid.hpp"
#include "ibfem/steppers.hpp"

namespace ibfem {

// Per-run record of step reports plus blow-up metadata.  Appends enforce a
// strictly increasing time column.
struct TimeSeries {
  std::vector<StepReport> rows;
  int blow_up_step = -1; // -1: completed without blow-up

  void append(const StepReport& r) {
    if (!rows.empty() && !(r.time > rows.back().time))
      throw Error("time series: time must be strictly increasing");
    rows.push_back(r);
  }
  int size() const { return static_cast<int>(rows.size()); }
};

// Area inside the structure, the mass-conservation observable.  Closed curves
// use the shoelace polygon area (signed, positive counterclockwise); thick
// bodies use the mapped reference area sum |det F_k| |T_k|.
inline double enclosed_area(const LagrangianMesh& g, const VecX& X) {
  if (g.codim == 1) return structure_area(g, X);
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("enclosed_area: position size mismatch");
  double A = 0;
  for (int k = 0; k < g.n_elements(); ++k)
    A += std::abs(deformation_gradient(g, X, k).determinant()) * g.tri_area[k];
  return A;
}

inline double enclosed_area(const SolidState& s) { return enclosed_area(*s.mesh, s.X); }

// Least-squares slope of area(t)/area(0) over the run.
inline double area_drift_rate(const TimeSeries& series) {
  if (series.size() < 10) throw Error("area drift rate: need at least 10 samples");
  double a0 = series.rows.front().area;
  double tbar = 0, ybar = 0;
  for (const auto& r : series.rows) {
    tbar += r.time;
    ybar += r.area / a0;
  }
  int n = series.size();
  tbar /= n;
  ybar /= n;
  double num = 0, den = 0;
  for (const auto& r : series.rows) {
    num += (r.time - tbar) * (r.area / a0 - ybar);
    den += (r.time - tbar) * (r.time - tbar);
  }
  return num / den;
}

// Shape deviation from a circle: (r_max - r_min)/(r_max + r_min) of nodal
// distances to the arithmetic centroid.  Zero for a perfect circle.
inline double eccentricity(const LagrangianMesh& g, const VecX& X) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("eccentricity: position size mismatch");
  Vec2 c(0, 0);
  int M = g.n_points();
  for (int i = 0; i < M; ++i) c += node_of(X, i);
  c /= M;
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0;
  for (int i = 0; i < M; ++i) {
    double r = (node_of(X, i) - c).norm();
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  return (rmax - rmin) / (rmax + rmin);
}

inline double eccentricity(const SolidState& s) { return eccentricity(*s.mesh, s.X); }

namespace detail {

// 17 significant digits round-trip doubles exactly; NaN marks a column that
// does not apply to the run and becomes an empty field.
inline void append_field(std::string& out, double v) {
  if (std::isnan(v)) return;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

} // namespace detail

inline const char* csv_header() {
  return "step,time,kinetic_fluid,kinetic_solid,elastic,energy_ratio,area,div_residual,"
         "constraint_residual,L_n,cfl_lhs,cfl_rhs_scale";
}

inline std::string format_csv(const TimeSeries& series) {
  std::string out = csv_header();
  out += '\n';
  for (const auto& r : series.rows) {
    out += std::to_string(r.step);
    const double cols[] = {r.time,         r.kinetic_fluid,       r.kinetic_solid, r.elastic,
                           r.energy_ratio, r.area,                r.div_residual,  r.constraint_residual,
                           r.L_n,          r.cfl_lhs,             r.cfl_rhs_scale};
    for (double v : cols) {
      out += ',';
      detail::append_field(out, v);
    }
    out += '\n';
  }
  return out;
}

inline void emit_csv(const TimeSeries& series, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("emit_csv: cannot open " + path);
  f << format_csv(series);
  if (!f) throw Error("emit_csv: write failed for " + path);
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_field(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw Error("csv: malformed number '" + s + "'");
  return v;
}

} // namespace detail

inline TimeSeries parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: empty input");
  if (line != csv_header()) throw Error("csv: unexpected header '" + line + "'");
  TimeSeries series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split_fields(line);
    if (f.size() != 12) throw Error("csv: expected 12 fields per row");
    StepReport r;
    r.step = static_cast<int>(std::strtol(f[0].c_str(), nullptr, 10));
    r.time = detail::parse_field(f[1]);
    r.kinetic_fluid = detail::parse_field(f[2]);
    r.kinetic_solid = detail::parse_field(f[3]);
    r.elastic = detail::parse_field(f[4]);
    r.energy_ratio = detail::parse_field(f[5]);
    r.area = detail::parse_field(f[6]);
    r.div_residual = detail::parse_field(f[7]);
    r.constraint_residual = detail::parse_field(f[8]);
    r.L_n = detail::parse_field(f[9]);
    r.cfl_lhs = detail::parse_field(f[10]);
    r.cfl_rhs_scale = detail::parse_field(f[11]);
    series.append(r);
  }
  return series;
}

inline TimeSeries parse_csv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("parse_csv: cannot open " + path);
  return parse_csv(f);
}

// Field snapshot: velocity and interpolated pressure at every velocity node,
// then the nodal positions of each structure.
inline void emit_snapshot(const MixedSpaces& s, const FluidState& fluid, const std::vector<SolidState>& solids,
                          const std::string& path) {
  std::string out = "# fluid\nx,y,u,v,p\n";
  for (int i = 0; i < s.vdof.n_dofs; ++i) {
    const Vec2& x = s.vdof.dof_coords[i];
    detail::append_field(out, x.x());
    out += ',';
    detail::append_field(out, x.y());
    out += ',';
    detail::append_field(out, fluid.u[2 * i]);
    out += ',';
    detail::append_field(out, fluid.u[2 * i + 1]);
    out += ',';
    detail::append_field(out, pressure_at(s, fluid.p, x));
    out += '\n';
  }
  for (const auto& solid : solids) {
    out += "# solid\nnode,X,Y\n";
    for (int i = 0; i < solid.mesh->n_points(); ++i) {
      out += std::to_string(i);
      out += ',';
      detail::append_field(out, solid.X[2 * i]);
      out += ',';
      detail::append_field(out, solid.X[2 * i + 1]);
      out += '\n';
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("emit_snapshot: cannot open " + path);
  f << out;
  if (!f) throw Error("emit_snapshot: write failed for " + path);
}

} // namespace ibfem
