#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ibfem/common.hpp"
#include "ibfem/diagnostics.hpp"
#include "ibfem/steppers.hpp"

namespace ibfem {

enum class GeometryKind { ellipse_curve, disc, two_circles };
enum class InitialVelocity { rest, opposing_shear };

// Flat description of one run; every field maps to one dotted config key.
struct ExperimentConfig {
  Scheme scheme = Scheme::dlm;
  ElementPair pair = ElementPair::taylor_hood;
  GeometryKind geometry = GeometryKind::ellipse_curve;
  Rect domain{0, 0, 1, 1};
  double center_x = 0.5, center_y = 0.5;
  double axis_a = 0.25, axis_b = 0.15;
  int curve_nodes = 11;
  int refinement = 1;
  double c1_x = 0.5, c1_y = 0.25, c2_x = 0.5, c2_y = 0.75, radius = 0.15;
  double rho_f = 1.0, nu = 1.0;
  double kappa = 5.0, rho_s = 1.3, thickness = 1.0;
  double dt = 0.1;
  int n_steps = 100, nx = 32, ny = 32;
  InitialVelocity init = InitialVelocity::rest;
  double shear_speed = 1.0, shear_width = 0.1;
  std::string output_dir;
  int snapshot_every = 10;
  Startup startup = Startup::zero_solid_velocity;
  int quad_points_segment = 4, quad_points_triangle = 7;
  double solver_tolerance = 1e-9;

  int codim() const { return geometry == GeometryKind::disc ? 0 : 1; }
};

inline void validate(const ExperimentConfig& c) {
  if (!(c.domain.x1 > c.domain.x0) || !(c.domain.y1 > c.domain.y0))
    throw ConfigError("config: domain must have positive extent");
  if (c.nx < 2 || c.ny < 2) throw ConfigError("config: nx and ny must be at least 2");
  if (!(c.dt > 0)) throw ConfigError("config: dt must be positive");
  if (c.n_steps < 0) throw ConfigError("config: n_steps must be nonnegative");
  if (!(c.nu > 0)) throw ConfigError("config: viscosity must be positive");
  if (!(c.rho_f > 0)) throw ConfigError("config: fluid density must be positive");
  if (c.kappa < 0) throw ConfigError("config: kappa must be nonnegative");
  if (!(c.axis_a > 0) || !(c.axis_b > 0)) throw ConfigError("config: axes must be positive");
  if (c.curve_nodes < 3) throw ConfigError("config: curve needs at least 3 nodes");
  if (c.refinement < 0 || c.refinement > 10) throw ConfigError("config: refinement must be in [0, 10]");
  if (!(c.radius > 0)) throw ConfigError("config: radius must be positive");
  if (c.snapshot_every < 1) throw ConfigError("config: snapshot_every must be at least 1");
  if (c.quad_points_segment < 1 || c.quad_points_triangle < 1)
    throw ConfigError("config: quadrature point counts must be positive");
  if (!(c.solver_tolerance > 0)) throw ConfigError("config: solver tolerance must be positive");
  if (!(c.shear_width > 0)) throw ConfigError("config: shear width must be positive");
  // Mirrors the solid-parameter precondition so rejection happens before any
  // solver state exists.
  double thick = c.codim() == 1 ? c.thickness : 1.0;
  if (c.codim() == 1 && !(c.thickness > 0)) throw ConfigError("config: thickness must be positive");
  if ((c.rho_s - c.rho_f) * thick < 0) throw ConfigError("config: solid density below fluid density");
}

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double config_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  return x;
}

inline int config_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(x);
}

} // namespace detail

// Canned configurations expressed in the config syntax itself, so presets and
// files travel through one parser.
inline std::string preset_text(const std::string& name) {
  if (name == "thin_energy")
    return "scheme = dlm\n"
           "element_pair = taylor_hood\n"
           "geometry = ellipse_curve\n"
           "geometry.a = 0.25\n"
           "geometry.b = 0.15\n"
           "geometry.m = 11\n"
           "nx = 32\nny = 32\n"
           "fluid.nu = 1.0\n"
           "solid.kappa = 5.0\n"
           "solid.rho = 1.3\n"
           "dt = 0.1\n"
           "n_steps = 100\n";
  if (name == "thick_energy")
    return "scheme = dlm\n"
           "element_pair = taylor_hood\n"
           "geometry = disc\n"
           "geometry.a = 0.3\n"
           "geometry.b = 0.2\n"
           "geometry.refinement = 1\n"
           "nx = 8\nny = 8\n"
           "fluid.nu = 0.05\n"
           "solid.kappa = 1.0\n"
           "solid.rho = 1.3\n"
           "dt = 0.1\n"
           "n_steps = 100\n";
  if (name == "relax")
    return "scheme = dlm\n"
           "element_pair = p1isop2_p0\n"
           "geometry = ellipse_curve\n"
           "geometry.center_x = 1.0\n"
           "geometry.center_y = 1.0\n"
           "geometry.a = 0.5\n"
           "geometry.b = 0.3\n"
           "geometry.m = 64\n"
           "domain.x0 = 0\ndomain.y0 = 0\ndomain.x1 = 2\ndomain.y1 = 2\n"
           "nx = 24\nny = 24\n"
           "fluid.nu = 1.0\n"
           "solid.kappa = 5.0\n"
           "solid.rho = 1.3\n"
           "dt = 0.0045\n"
           "n_steps = 200\n";
  if (name == "rest")
    return "scheme = feibm\n"
           "geometry = ellipse_curve\n"
           "geometry.a = 0.25\n"
           "geometry.b = 0.15\n"
           "geometry.m = 9\n"
           "nx = 8\nny = 8\n"
           "solid.kappa = 0.0\n"
           "solid.rho = 1.3\n"
           "dt = 0.1\n"
           "n_steps = 20\n";
  if (name == "two_circles")
    return "scheme = dlm\n"
           "geometry = two_circles\n"
           "geometry.c1_x = 0.5\ngeometry.c1_y = 0.25\n"
           "geometry.c2_x = 0.5\ngeometry.c2_y = 0.75\n"
           "geometry.radius = 0.15\n"
           "geometry.m = 32\n"
           "nx = 16\nny = 16\n"
           "fluid.nu = 0.5\n"
           "solid.kappa = 1.0\n"
           "solid.rho = 1.3\n"
           "dt = 0.05\n"
           "n_steps = 100\n"
           "initial_velocity = opposing_shear\n"
           "shear.speed = 1.0\n"
           "shear.width = 0.1\n";
  throw ConfigError("config: unknown preset '" + name + "'");
}

namespace detail {

inline void apply_config_key(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto bad_choice = [&](const char* choices) {
    throw ConfigError("config: key '" + key + "' must be one of " + choices + ", got '" + value + "'");
  };
  if (key == "scheme") {
    if (value == "dlm") c.scheme = Scheme::dlm;
    else if (value == "feibm") c.scheme = Scheme::feibm;
    else bad_choice("{dlm, feibm}");
  } else if (key == "element_pair") {
    if (value == "taylor_hood") c.pair = ElementPair::taylor_hood;
    else if (value == "p1isop2_p0") c.pair = ElementPair::p1_iso_p2_p0;
    else bad_choice("{taylor_hood, p1isop2_p0}");
  } else if (key == "geometry") {
    if (value == "ellipse_curve") c.geometry = GeometryKind::ellipse_curve;
    else if (value == "disc") c.geometry = GeometryKind::disc;
    else if (value == "two_circles") c.geometry = GeometryKind::two_circles;
    else bad_choice("{ellipse_curve, disc, two_circles}");
  } else if (key == "initial_velocity") {
    if (value == "rest") c.init = InitialVelocity::rest;
    else if (value == "opposing_shear") c.init = InitialVelocity::opposing_shear;
    else bad_choice("{rest, opposing_shear}");
  } else if (key == "startup") {
    if (value == "zero_solid_velocity") c.startup = Startup::zero_solid_velocity;
    else if (value == "zero_previous_position") c.startup = Startup::zero_previous_position;
    else bad_choice("{zero_solid_velocity, zero_previous_position}");
  } else if (key == "geometry.center_x") c.center_x = config_real(key, value);
  else if (key == "geometry.center_y") c.center_y = config_real(key, value);
  else if (key == "geometry.a") c.axis_a = config_real(key, value);
  else if (key == "geometry.b") c.axis_b = config_real(key, value);
  else if (key == "geometry.m") c.curve_nodes = config_int(key, value);
  else if (key == "geometry.refinement") c.refinement = config_int(key, value);
  else if (key == "geometry.c1_x") c.c1_x = config_real(key, value);
  else if (key == "geometry.c1_y") c.c1_y = config_real(key, value);
  else if (key == "geometry.c2_x") c.c2_x = config_real(key, value);
  else if (key == "geometry.c2_y") c.c2_y = config_real(key, value);
  else if (key == "geometry.radius") c.radius = config_real(key, value);
  else if (key == "domain.x0") c.domain.x0 = config_real(key, value);
  else if (key == "domain.y0") c.domain.y0 = config_real(key, value);
  else if (key == "domain.x1") c.domain.x1 = config_real(key, value);
  else if (key == "domain.y1") c.domain.y1 = config_real(key, value);
  else if (key == "fluid.rho") c.rho_f = config_real(key, value);
  else if (key == "fluid.nu") c.nu = config_real(key, value);
  else if (key == "solid.kappa") c.kappa = config_real(key, value);
  else if (key == "solid.rho") c.rho_s = config_real(key, value);
  else if (key == "solid.thickness") c.thickness = config_real(key, value);
  else if (key == "dt") c.dt = config_real(key, value);
  else if (key == "n_steps") c.n_steps = config_int(key, value);
  else if (key == "nx") c.nx = config_int(key, value);
  else if (key == "ny") c.ny = config_int(key, value);
  else if (key == "shear.speed") c.shear_speed = config_real(key, value);
  else if (key == "shear.width") c.shear_width = config_real(key, value);
  else if (key == "output.directory") c.output_dir = value;
  else if (key == "output.snapshot_every") c.snapshot_every = config_int(key, value);
  else if (key == "coupling.quad_points_segment") c.quad_points_segment = config_int(key, value);
  else if (key == "coupling.quad_points_triangle") c.quad_points_triangle = config_int(key, value);
  else if (key == "solver.tolerance") c.solver_tolerance = config_real(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline std::vector<std::pair<std::string, std::string>> config_pairs(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + " has an empty key");
    out.emplace_back(key, value);
  }
  return out;
}

} // namespace detail

// Parses config text; a `preset = name` line loads that preset's values first
// and the remaining keys override them.  `overrides` (e.g. from command-line
// flags) are applied last.
inline ExperimentConfig
parse_config_text(const std::string& text,
                  const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  auto pairs = detail::config_pairs(text);
  ExperimentConfig c;
  for (const auto& [key, value] : pairs)
    if (key == "preset")
      for (const auto& [pk, pv] : detail::config_pairs(preset_text(value))) detail::apply_config_key(c, pk, pv);
  for (const auto& [key, value] : pairs)
    if (key != "preset") detail::apply_config_key(c, key, value);
  for (const auto& [key, value] : overrides) detail::apply_config_key(c, key, value);
  validate(c);
  return c;
}

inline ExperimentConfig
parse_config_file(const std::string& path,
                  const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

// Node count giving reference spacing at most h_s on the configured curve.
inline int curve_nodes_for_spacing(double a, double b, double h_s) {
  if (!(h_s > 0)) throw ConfigError("config: h_s must be positive");
  double L = build_lagrangian_curve(Vec2(0, 0), a, b, 8).ref_length;
  return std::max(3, static_cast<int>(std::ceil(L / h_s)));
}

// Refinement level whose element diameter best matches h_s for the disc.
inline int disc_refinement_for_spacing(double a, double b, double h_s) {
  if (!(h_s > 0)) throw ConfigError("config: h_s must be positive");
  double h0 = build_lagrangian_disc(Vec2(0, 0), a, b, 0).h_s;
  return std::clamp(static_cast<int>(std::lround(std::log2(h0 / h_s))), 0, 10);
}

inline std::vector<LagrangianMesh> build_structures(const ExperimentConfig& c) {
  std::vector<LagrangianMesh> out;
  Vec2 center(c.center_x, c.center_y);
  switch (c.geometry) {
  case GeometryKind::ellipse_curve:
    out.push_back(build_lagrangian_curve(center, c.axis_a, c.axis_b, c.curve_nodes));
    break;
  case GeometryKind::disc:
    out.push_back(build_lagrangian_disc(center, c.axis_a, c.axis_b, c.refinement));
    break;
  case GeometryKind::two_circles:
    out.push_back(build_lagrangian_curve(Vec2(c.c1_x, c.c1_y), c.radius, c.radius, c.curve_nodes));
    out.push_back(build_lagrangian_curve(Vec2(c.c2_x, c.c2_y), c.radius, c.radius, c.curve_nodes));
    break;
  }
  return out;
}

inline Simulation make_simulation(const ExperimentConfig& c) {
  validate(c);
  auto mesh = build_eulerian_mesh(c.domain, c.nx, c.ny);
  FluidParams fp{c.rho_f, c.nu};
  SolidParams sp = make_solid_params(c.kappa, c.rho_s, c.thickness, c.codim(), c.rho_f);
  SchemeConfig sc;
  sc.scheme = c.scheme;
  sc.dt = c.dt;
  sc.n_steps = std::max(1, c.n_steps);
  sc.linear_solver_tolerance = c.solver_tolerance;
  sc.startup = c.startup;
  CouplingConfig cc{c.quad_points_segment, c.quad_points_triangle};
  return Simulation(std::move(mesh), c.pair, build_structures(c), fp, sp, sc, cc);
}

// Opposing horizontal streams meeting at mid-height, confined by a polynomial
// bump that vanishes on the boundary, then projected to the discretely
// divergence-free space.
inline VecX opposing_shear_field(const ExperimentConfig& c) {
  auto mesh = build_eulerian_mesh(c.domain, c.nx, c.ny);
  auto s = make_mixed_spaces(mesh, c.pair);
  auto fm = assemble_fluid_matrices(s, FluidParams{c.rho_f, c.nu});
  double ymid = 0.5 * (c.domain.y0 + c.domain.y1);
  double W = c.domain.width(), H = c.domain.height();
  VecX u(s.n_vel());
  for (int i = 0; i < s.vdof.n_dofs; ++i) {
    const Vec2& x = s.vdof.dof_coords[i];
    double sx = (x.x() - c.domain.x0) / W, sy = (x.y() - c.domain.y0) / H;
    double bump = 16.0 * sx * (1 - sx) * sy * (1 - sy);
    u[2 * i] = c.shear_speed * std::tanh((x.y() - ymid) / c.shear_width) * bump;
    u[2 * i + 1] = 0;
  }
  return project_divergence_free(s, fm, u, c.solver_tolerance);
}

using StepHook = std::function<void(const Simulation&, const StepReport&)>;

// Runs the configured experiment: n_steps of the chosen scheme with CSV and
// periodic snapshot emission, stopping early on blow-up (energy ratio above
// 10 or non-finite state) with the blow-up step recorded.
inline TimeSeries run_experiment(const ExperimentConfig& c, const StepHook& hook = {}) {
  Simulation sim = make_simulation(c);
  if (c.init == InitialVelocity::opposing_shear) sim.set_velocity(opposing_shear_field(c));

  bool emit = !c.output_dir.empty();
  std::filesystem::path dir(c.output_dir);
  auto mesh = build_eulerian_mesh(c.domain, c.nx, c.ny);
  auto spaces = make_mixed_spaces(mesh, c.pair);
  auto snapshot = [&](int step) {
    char name[32];
    std::snprintf(name, sizeof(name), "snapshot_%06d.csv", step);
    emit_snapshot(spaces, sim.fluid, sim.solids, (dir / name).string());
  };
  if (emit) {
    std::filesystem::create_directories(dir);
    snapshot(0);
  }

  TimeSeries series;
  series.append(sim.initial_report());
  if (hook) hook(sim, series.rows.back());
  for (int i = 0; i < c.n_steps; ++i) {
    StepReport r;
    try {
      r = sim.step();
    } catch (const FactorizationError& e) {
      throw FactorizationError("step " + std::to_string(i + 1) + ": " + e.what());
    }
    series.append(r);
    if (hook) hook(sim, r);
    bool finite = std::isfinite(r.total()) && std::isfinite(r.div_residual);
    if (!finite || r.energy_ratio > 10.0) {
      series.blow_up_step = r.step;
      break;
    }
    if (emit && r.step % c.snapshot_every == 0) snapshot(r.step);
  }
  if (emit) emit_csv(series, (dir / "series.csv").string());
  return series;
}

// One cell of the stability map.
struct SweepCell {
  Scheme scheme = Scheme::dlm;
  double dt = 0, h_s = 0, h_x = 0;
  bool stable = false;
  int blow_up_step = -1; // -1: ran to completion
  std::string error;     // nonempty: run aborted with this failure
};

struct SweepGrid {
  std::vector<double> dts, hss, hxs;
};

// Runs every (scheme, dt, h_s, h_x) combination of the grid on the base
// configuration.  Failures are recorded per cell, never fatal.
inline std::vector<SweepCell> sweep_stability(const ExperimentConfig& base, const SweepGrid& grid) {
  if (grid.dts.empty() || grid.hss.empty() || grid.hxs.empty())
    throw ConfigError("sweep: every grid dimension needs at least one value");
  std::vector<SweepCell> table;
  for (Scheme scheme : {Scheme::feibm, Scheme::dlm})
    for (double dt : grid.dts)
      for (double h_s : grid.hss)
        for (double h_x : grid.hxs) {
          SweepCell cell;
          cell.scheme = scheme;
          cell.dt = dt;
          cell.h_s = h_s;
          cell.h_x = h_x;
          try {
            ExperimentConfig c = base;
            c.scheme = scheme;
            c.dt = dt;
            c.output_dir.clear();
            if (c.geometry == GeometryKind::disc)
              c.refinement = disc_refinement_for_spacing(c.axis_a, c.axis_b, h_s);
            else if (c.geometry == GeometryKind::two_circles)
              c.curve_nodes = curve_nodes_for_spacing(c.radius, c.radius, h_s);
            else
              c.curve_nodes = curve_nodes_for_spacing(c.axis_a, c.axis_b, h_s);
            c.nx = std::max(2, static_cast<int>(std::lround(c.domain.width() / h_x)));
            c.ny = std::max(2, static_cast<int>(std::lround(c.domain.height() / h_x)));
            TimeSeries series = run_experiment(c);
            cell.blow_up_step = series.blow_up_step;
            cell.stable = series.blow_up_step < 0;
          } catch (const Error& e) {
            cell.error = e.what();
            cell.stable = false;
          }
          table.push_back(cell);
        }
  return table;
}

inline std::string format_sweep_csv(const std::vector<SweepCell>& table) {
  std::string out = "scheme,dt,h_s,h_x,stable,blow_up_step,error\n";
  for (const auto& c : table) {
    out += c.scheme == Scheme::dlm ? "dlm," : "feibm,";
    detail::append_field(out, c.dt);
    out += ',';
    detail::append_field(out, c.h_s);
    out += ',';
    detail::append_field(out, c.h_x);
    out += ',';
    out += c.stable ? '1' : '0';
    out += ',';
    out += std::to_string(c.blow_up_step);
    out += ',';
    std::string msg = c.error;
    for (char& ch : msg)
      if (ch == ',' || ch == '\n') ch = ';';
    out += msg;
    out += '\n';
  }
  return out;
}

inline void emit_sweep_csv(const std::vector<SweepCell>& table, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("emit_sweep_csv: cannot open " + path);
  f << format_sweep_csv(table);
  if (!f) throw Error("emit_sweep_csv: write failed for " + path);
}

} // namespace ibfem
