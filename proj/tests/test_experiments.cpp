#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ibfem/experiments.hpp"
#include "oracles.hpp"

using namespace ibfem;

namespace {

int count_matching(const std::filesystem::path& dir, const std::string& prefix) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().filename().string().rfind(prefix, 0) == 0) ++n;
  return n;
}

} // namespace

TEST_CASE("config parser round-trips every key", "[experiments]") {
  std::string text =
      "# full key set\n"
      "scheme = feibm\n"
      "element_pair = p1isop2_p0\n"
      "geometry = disc\n"
      "geometry.center_x = 0.7\n"
      "geometry.center_y = 0.6   # trailing comment\n"
      "geometry.a = 0.2\n"
      "geometry.b = 0.12\n"
      "geometry.m = 15\n"
      "geometry.refinement = 2\n"
      "geometry.c1_x = 0.4\n"
      "geometry.c1_y = 0.3\n"
      "geometry.c2_x = 0.6\n"
      "geometry.c2_y = 0.7\n"
      "geometry.radius = 0.1\n"
      "domain.x0 = -1\n"
      "domain.y0 = -2\n"
      "domain.x1 = 3\n"
      "domain.y1 = 2\n"
      "fluid.rho = 1.5\n"
      "fluid.nu = 0.25\n"
      "solid.kappa = 7\n"
      "solid.rho = 2.0\n"
      "solid.thickness = 0.5\n"
      "dt = 0.02\n"
      "n_steps = 12\n"
      "nx = 6\n"
      "ny = 10\n"
      "initial_velocity = opposing_shear\n"
      "shear.speed = 2.5\n"
      "shear.width = 0.05\n"
      "output.directory = /tmp/somewhere\n"
      "output.snapshot_every = 3\n"
      "startup = zero_previous_position\n"
      "coupling.quad_points_segment = 5\n"
      "coupling.quad_points_triangle = 12\n"
      "solver.tolerance = 1e-10\n";
  ExperimentConfig c = parse_config_text(text);
  CHECK(c.scheme == Scheme::feibm);
  CHECK(c.pair == ElementPair::p1_iso_p2_p0);
  CHECK(c.geometry == GeometryKind::disc);
  CHECK(c.codim() == 0);
  CHECK(c.center_x == 0.7);
  CHECK(c.center_y == 0.6);
  CHECK(c.axis_a == 0.2);
  CHECK(c.axis_b == 0.12);
  CHECK(c.curve_nodes == 15);
  CHECK(c.refinement == 2);
  CHECK(c.c1_x == 0.4);
  CHECK(c.c2_y == 0.7);
  CHECK(c.radius == 0.1);
  CHECK(c.domain.x0 == -1);
  CHECK(c.domain.y1 == 2);
  CHECK(c.rho_f == 1.5);
  CHECK(c.nu == 0.25);
  CHECK(c.kappa == 7);
  CHECK(c.rho_s == 2.0);
  CHECK(c.thickness == 0.5);
  CHECK(c.dt == 0.02);
  CHECK(c.n_steps == 12);
  CHECK(c.nx == 6);
  CHECK(c.ny == 10);
  CHECK(c.init == InitialVelocity::opposing_shear);
  CHECK(c.shear_speed == 2.5);
  CHECK(c.shear_width == 0.05);
  CHECK(c.output_dir == "/tmp/somewhere");
  CHECK(c.snapshot_every == 3);
  CHECK(c.startup == Startup::zero_previous_position);
  CHECK(c.quad_points_segment == 5);
  CHECK(c.quad_points_triangle == 12);
  CHECK(c.solver_tolerance == 1e-10);
}

TEST_CASE("config parser rejects bad input with named errors", "[experiments]") {
  CHECK_THROWS_AS(parse_config_text("bogus_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("dt = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("n_steps = 3.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("scheme = magic\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just a line\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("= 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("dt = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("dt = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("geometry.m = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("n_steps = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("fluid.nu = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("output.snapshot_every = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("geometry.refinement = 11\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("domain.x1 = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("solid.rho = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("preset = nonexistent\n"), ConfigError);
  // Message carries the offending key.
  try {
    parse_config_text("fluid.viscosity = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("fluid.viscosity") != std::string::npos);
  }
}

TEST_CASE("presets parse and later keys override them", "[experiments]") {
  ExperimentConfig thin = parse_config_text("preset = thin_energy\n");
  CHECK(thin.scheme == Scheme::dlm);
  CHECK(thin.pair == ElementPair::taylor_hood);
  CHECK(thin.geometry == GeometryKind::ellipse_curve);
  CHECK(thin.kappa == 5.0);
  CHECK(thin.nu == 1.0);
  CHECK(thin.rho_s == 1.3);
  CHECK(thin.nx == 32);
  CHECK(thin.dt == 0.1);
  CHECK(thin.n_steps == 100);

  ExperimentConfig thick = parse_config_text("preset = thick_energy\n");
  CHECK(thick.geometry == GeometryKind::disc);
  CHECK(thick.refinement == 1);
  CHECK(thick.nu == 0.05);
  CHECK(thick.kappa == 1.0);

  ExperimentConfig relax = parse_config_text("preset = relax\n");
  CHECK(relax.pair == ElementPair::p1_iso_p2_p0);
  CHECK(relax.domain.x1 == 2.0);
  CHECK(relax.curve_nodes == 64);
  CHECK(relax.axis_a == 0.5);
  CHECK(relax.n_steps == 200);

  ExperimentConfig rest = parse_config_text("preset = rest\n");
  CHECK(rest.kappa == 0.0);
  CHECK(rest.init == InitialVelocity::rest);

  ExperimentConfig two = parse_config_text("preset = two_circles\n");
  CHECK(two.geometry == GeometryKind::two_circles);
  CHECK(two.init == InitialVelocity::opposing_shear);
  CHECK(two.n_steps >= 100);

  // File keys override the preset, overrides beat the file.
  ExperimentConfig c = parse_config_text("preset = thin_energy\nn_steps = 5\ndt = 0.2\n", {{"dt", "0.01"}});
  CHECK(c.n_steps == 5);
  CHECK(c.dt == 0.01);
  CHECK(c.kappa == 5.0);
}

TEST_CASE("resolution mappings track the requested spacing", "[experiments]") {
  // Circle of radius 0.25: node count must cover the perimeter at spacing h_s.
  int m = curve_nodes_for_spacing(0.25, 0.25, 0.125);
  double perimeter = 2 * M_PI * 0.25;
  CHECK(m == static_cast<int>(std::ceil(perimeter / 0.125)));
  LagrangianMesh g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.25, 0.25, m);
  CHECK(g.h_s <= 0.125);

  CHECK(curve_nodes_for_spacing(0.25, 0.25, 1e3) == 3);
  CHECK(curve_nodes_for_spacing(0.25, 0.25, 0.125 / 2) >= 2 * m - 2);

  // Disc levels halve the element size per refinement.
  double h0 = build_lagrangian_disc(Vec2(0, 0), 0.3, 0.2, 0).h_s;
  CHECK(disc_refinement_for_spacing(0.3, 0.2, h0) == 0);
  CHECK(disc_refinement_for_spacing(0.3, 0.2, h0 / 2) == 1);
  CHECK(disc_refinement_for_spacing(0.3, 0.2, h0 / 4) == 2);
  CHECK(disc_refinement_for_spacing(0.3, 0.2, 1.0 / 8) == 1);
  CHECK_THROWS_AS(curve_nodes_for_spacing(0.25, 0.25, 0.0), ConfigError);
}

TEST_CASE("rest preset stays exactly at rest", "[experiments]") {
  ExperimentConfig c = parse_config_text("preset = rest\nn_steps = 5\n");
  TimeSeries series = run_experiment(c);
  REQUIRE(series.size() == 6);
  CHECK(series.blow_up_step == -1);
  for (const auto& r : series.rows) {
    CHECK(r.kinetic_fluid == 0.0);
    CHECK(r.kinetic_solid == 0.0);
    CHECK(r.elastic == 0.0);
    CHECK(r.energy_ratio == 1.0);
  }
}

TEST_CASE("opposing shear field is nonzero and discretely divergence-free", "[experiments]") {
  ExperimentConfig c = parse_config_text("preset = two_circles\nnx = 8\nny = 8\ngeometry.m = 12\nn_steps = 0\n");
  TimeSeries series = run_experiment(c);
  REQUIRE(series.size() == 1);
  const StepReport& r0 = series.rows[0];
  CHECK(r0.kinetic_fluid > 1e-4);
  CHECK(r0.div_residual <= 1e-9 * std::max(1.0, r0.kinetic_fluid));

  // The raw field itself respects the no-slip boundary.
  VecX u = opposing_shear_field(c);
  auto mesh = build_eulerian_mesh(c.domain, c.nx, c.ny);
  auto s = make_mixed_spaces(mesh, c.pair);
  for (int d : s.vdof.boundary_dofs) {
    CHECK(u[2 * d] == 0.0);
    CHECK(u[2 * d + 1] == 0.0);
  }
}

TEST_CASE("thin energy preset keeps the energy ratio below one", "[experiments]") {
  ExperimentConfig c = parse_config_text("preset = thin_energy\nn_steps = 5\n");
  TimeSeries series = run_experiment(c);
  REQUIRE(series.size() == 6);
  CHECK(series.blow_up_step == -1);
  for (const auto& r : series.rows) CHECK(r.energy_ratio <= 1.0 + 1e-8);
}

TEST_CASE("thick energy preset runs the immersed disc", "[experiments]") {
  ExperimentConfig c = parse_config_text("preset = thick_energy\nn_steps = 3\n");
  TimeSeries series = run_experiment(c);
  REQUIRE(series.size() == 4);
  CHECK(series.blow_up_step == -1);
  for (const auto& r : series.rows) {
    CHECK(std::isfinite(r.area));
    CHECK(r.energy_ratio <= 1.0 + 1e-8);
  }
}

TEST_CASE("two circle shear run advances without blow-up", "[experiments]") {
  ExperimentConfig c = parse_config_text("preset = two_circles\nnx = 8\nny = 8\ngeometry.m = 16\nn_steps = 3\n");
  int hook_calls = 0;
  TimeSeries series = run_experiment(c, [&](const Simulation& sim, const StepReport& r) {
    ++hook_calls;
    REQUIRE(sim.solids.size() == 2);
    CHECK(std::isfinite(r.total()));
  });
  REQUIRE(series.size() == 4);
  CHECK(hook_calls == 4);
  CHECK(series.blow_up_step == -1);
  CHECK(series.rows.back().kinetic_fluid > 0);
}

TEST_CASE("blow-up ends the run early and is recorded", "[experiments]") {
  // Stiff fiber under the explicit-spread scheme far past the stable step size.
  std::string text =
      "scheme = feibm\n"
      "geometry = ellipse_curve\n"
      "geometry.a = 0.25\n"
      "geometry.b = 0.15\n"
      "geometry.m = 48\n"
      "nx = 8\nny = 8\n"
      "fluid.nu = 0.01\n"
      "solid.kappa = 5\n"
      "solid.rho = 1.3\n"
      "dt = 0.02\n"
      "n_steps = 40\n";
  TimeSeries series = run_experiment(parse_config_text(text));
  REQUIRE(series.blow_up_step > 0);
  CHECK(series.blow_up_step < 40);
  CHECK(static_cast<int>(series.size()) == series.blow_up_step + 1);
  const StepReport& last = series.rows.back();
  CHECK((!std::isfinite(last.total()) || last.energy_ratio > 10.0));
}

TEST_CASE("sweep covers both schemes and records failures per cell", "[experiments]") {
  ExperimentConfig base = parse_config_text(
      "geometry = ellipse_curve\ngeometry.a = 0.25\ngeometry.b = 0.15\n"
      "fluid.nu = 1.0\nsolid.kappa = 5\nsolid.rho = 1.3\nn_steps = 5\n");
  SweepGrid grid;
  grid.dts = {0.05};
  grid.hss = {0.25};
  grid.hxs = {0.25};
  auto table = sweep_stability(base, grid);
  REQUIRE(table.size() == 2);
  CHECK(table[0].scheme == Scheme::feibm);
  CHECK(table[1].scheme == Scheme::dlm);
  for (const auto& cell : table) {
    CHECK(cell.dt == 0.05);
    CHECK(cell.h_s == 0.25);
    CHECK(cell.h_x == 0.25);
    CHECK(cell.error.empty());
  }
  CHECK(table[1].stable);

  // An unstable cell is recorded, not fatal.
  ExperimentConfig stiff = base;
  stiff.kappa = 50;
  stiff.nu = 0.01;
  SweepGrid wild;
  wild.dts = {0.25};
  wild.hss = {0.03};
  wild.hxs = {0.125};
  auto table2 = sweep_stability(stiff, wild);
  REQUIRE(table2.size() == 2);
  CHECK_FALSE(table2[0].stable); // explicit scheme far past its stable step
  CHECK((table2[0].blow_up_step >= 0 || !table2[0].error.empty()));

  SweepGrid empty;
  CHECK_THROWS_AS(sweep_stability(base, empty), ConfigError);

  // Deterministic CSV with one row per cell.
  std::string csv = format_sweep_csv(table2);
  CHECK(csv == format_sweep_csv(sweep_stability(stiff, wild)));
  size_t lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == table2.size() + 1);
  CHECK(csv.rfind("scheme,dt,h_s,h_x,stable,blow_up_step,error\n", 0) == 0);
}

TEST_CASE("experiment outputs land in the requested directory", "[experiments]") {
  std::filesystem::path dir = "/tmp/ibfem_exp_out";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = parse_config_text(
      "preset = rest\nn_steps = 4\noutput.snapshot_every = 2\noutput.directory = " + dir.string() + "\n");
  run_experiment(c);
  REQUIRE(std::filesystem::exists(dir / "series.csv"));
  TimeSeries series = parse_csv_file((dir / "series.csv").string());
  CHECK(series.size() == 5);
  CHECK(std::filesystem::exists(dir / "snapshot_000000.csv"));
  CHECK(std::filesystem::exists(dir / "snapshot_000002.csv"));
  CHECK(std::filesystem::exists(dir / "snapshot_000004.csv"));
  CHECK(count_matching(dir, "snapshot_") == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical configs produce identical series bytes", "[experiments]") {
  ExperimentConfig c = parse_config_text("preset = two_circles\nnx = 8\nny = 8\ngeometry.m = 12\nn_steps = 2\n");
  TimeSeries a = run_experiment(c);
  TimeSeries b = run_experiment(c);
  CHECK(format_csv(a) == format_csv(b));
}
