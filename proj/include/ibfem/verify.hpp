#pragma once

#include <Eigen/SparseCholesky>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ibfem/common.hpp"
#include "ibfem/experiments.hpp"

namespace ibfem {

// Seeded defect for the mutation self-test: the gradient-consistency check
// must go red when the analytic elastic gradient has its sign flipped.
enum class VerifyMutation { none, flip_elastic_gradient };

struct VerifyCheck {
  std::string module, name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  int n_failed() const {
    int n = 0;
    for (const auto& c : checks)
      if (!c.pass) ++n;
    return n;
  }
  bool all_pass() const { return n_failed() == 0; }
};

// One row per check: module,check,status,detail.  Commas and newlines in
// details are replaced so the table stays trivially splittable.
inline std::string format_verify_table(const VerifyReport& rep) {
  std::string out = "module,check,status,detail\n";
  for (const auto& c : rep.checks) {
    std::string d = c.detail;
    for (char& ch : d)
      if (ch == ',' || ch == '\n') ch = ';';
    out += c.module + "," + c.name + "," + (c.pass ? "pass" : "FAIL") + "," + d + "\n";
  }
  return out;
}

namespace detail {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

inline std::string bound(double worst, double tol) {
  return "worst " + num(worst) + " (tol " + num(tol) + ")";
}

struct VerifyRng {
  std::mt19937 gen;
  explicit VerifyRng(unsigned seed) : gen(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }
  VecX vector(int n, double amp) {
    VecX v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(-amp, amp);
    return v;
  }
};

// Nodal interpolation of an analytic field into the velocity space.
template <typename F> inline VecX interpolate_field(const MixedSpaces& s, F&& f) {
  VecX u(s.n_vel());
  for (int i = 0; i < s.vdof.n_dofs; ++i) {
    Vec2 v = f(s.vdof.dof_coords[i]);
    u[2 * i] = v.x();
    u[2 * i + 1] = v.y();
  }
  return u;
}

// Submatrix of A keeping the listed indices, for reduced definiteness checks.
inline SpMat submatrix(const SpMat& A, const std::vector<int>& keep) {
  std::vector<int> pos(A.rows(), -1);
  for (int i = 0; i < static_cast<int>(keep.size()); ++i) pos[keep[i]] = i;
  std::vector<Triplet> trips;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      if (pos[it.row()] >= 0 && pos[it.col()] >= 0) trips.emplace_back(pos[it.row()], pos[it.col()], it.value());
  SpMat R(keep.size(), keep.size());
  R.setFromTriplets(trips.begin(), trips.end());
  return R;
}

inline std::vector<int> free_velocity_dofs(const MixedSpaces& s) {
  std::vector<int> keep;
  for (int i = 0; i < s.vdof.n_dofs; ++i)
    if (!s.vdof.on_boundary[i]) {
      keep.push_back(2 * i);
      keep.push_back(2 * i + 1);
    }
  return keep;
}

class Verifier {
public:
  explicit Verifier(VerifyMutation mutation) : mutation_(mutation) {}

  VerifyReport run() {
    check("geometry", "tiling", [&] { return geometry_tiling(); });
    check("geometry", "point_location_brute_force", [&] { return geometry_locate(); });
    check("geometry", "rigid_motion_segment_length", [&] { return geometry_rigid(); });
    check("geometry", "circle_edge_lengths", [&] { return geometry_circle_edges(); });
    check("fem", "partition_of_unity", [&] { return fem_partition(); });
    check("fem", "quadrature_exactness", [&] { return fem_quadrature(); });
    check("fem", "dof_continuity", [&] { return fem_continuity(); });
    check("fluid", "convection_skew_symmetry", [&] { return fluid_skew(); });
    check("fluid", "mass_viscous_definiteness", [&] { return fluid_spd(); });
    check("fluid", "stokes_patch", [&] { return fluid_patch(); });
    check("fluid", "pressure_zero_mean", [&] { return fluid_pressure_mean(); });
    check("solid", "gradient_consistency", [&] { return solid_gradient(); });
    check("solid", "energy_convexity", [&] { return solid_convexity(); });
    check("solid", "translation_invariance", [&] { return solid_translation(); });
    check("solid", "jump_volume_equivalence", [&] { return solid_jump_volume(); });
    check("coupling", "constraint_form_consistency", [&] { return coupling_constraint_forms(); });
    check("coupling", "constraint_recovery", [&] { return coupling_recovery(); });
    check("coupling", "spread_gradient_pairing", [&] { return coupling_pairing(); });
    check("steppers", "dlm_energy_inequality", [&] { return stepper_dlm_energy(); });
    check("steppers", "feibm_margin_inequality", [&] { return stepper_feibm_energy(); });
    check("steppers", "divergence_residual", [&] { return stepper_divergence(); });
    check("steppers", "dlm_constraint_residual", [&] { return stepper_constraint(); });
    check("steppers", "run_determinism", [&] { return stepper_determinism(); });
    check("diagnostics", "area_rigid_motion", [&] { return diag_area_rigid(); });
    check("diagnostics", "area_orientation", [&] { return diag_area_orientation(); });
    check("experiments", "config_rejection", [&] { return exp_config_rejection(); });
    check("experiments", "run_byte_determinism", [&] { return exp_determinism(); });
    return std::move(rep_);
  }

private:
  VerifyMutation mutation_;
  VerifyReport rep_;
  // Reports of the stepper runs, shared by the residual checks.
  std::vector<StepReport> dlm_rows_, feibm_rows_;

  using Result = std::pair<bool, std::string>;

  template <typename F> void check(const char* module, const char* name, F&& body) {
    VerifyCheck c;
    c.module = module;
    c.name = name;
    try {
      auto [pass, detail] = body();
      c.pass = pass;
      c.detail = detail;
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = std::string("exception: ") + e.what();
    }
    rep_.checks.push_back(std::move(c));
  }

  VecX mutated_elastic_force(const LagrangianMesh& g, const VecX& X, const LinearElastic& model) {
    VecX G = elastic_force(g, X, model);
    return mutation_ == VerifyMutation::flip_elastic_gradient ? VecX(-G) : G;
  }

  Result geometry_tiling() {
    double worst = 0;
    for (auto [nx, ny] : {std::pair{7, 5}, {16, 16}, {3, 11}}) {
      Rect dom{0.2, -1.0, 2.7, 1.5};
      auto m = build_eulerian_mesh(dom, nx, ny);
      double sum = 0;
      for (int e = 0; e < m.n_triangles(); ++e) sum += element_geometry(m, e).area;
      worst = std::max(worst, std::abs(sum / (dom.width() * dom.height()) - 1.0));
    }
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result geometry_locate() {
    auto m = build_eulerian_mesh(Rect{0, 0, 1.5, 1}, 9, 6);
    VerifyRng rng(101);
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
      Vec2 p(rng.uniform(0, 1.5), rng.uniform(0, 1));
      if (t % 3 == 0) p.x() = m.dx * std::round(p.x() / m.dx); // exercise gridline ties
      PointLocation fast = locate_point(m, p);
      int brute = -1;
      for (int e = 0; e < m.n_triangles() && brute < 0; ++e) {
        const auto& tr = m.triangles[e];
        auto b = barycentric(m.vertices[tr[0]], m.vertices[tr[1]], m.vertices[tr[2]], p);
        if (std::min({b[0], b[1], b[2]}) >= -1e-12) brute = e;
      }
      if (fast.element != brute) ++bad;
    }
    return {bad == 0, std::to_string(bad) + " of 1000 points disagree"};
  }

  Result geometry_rigid() {
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.18, 17);
    VerifyRng rng(102);
    VecX X = g.X0 + rng.vector(g.X0.size(), 0.04);
    double L0 = max_segment_length(g, X), worst = 0;
    double c = std::cos(0.7), s = std::sin(0.7);
    VecX Xt(X.size()), Xr(X.size());
    for (int i = 0; i < g.n_points(); ++i) {
      Xt[2 * i] = X[2 * i] + 3.1;
      Xt[2 * i + 1] = X[2 * i + 1] - 1.7;
      Xr[2 * i] = c * X[2 * i] - s * X[2 * i + 1];
      Xr[2 * i + 1] = s * X[2 * i] + c * X[2 * i + 1];
    }
    worst = std::max(std::abs(max_segment_length(g, Xt) - L0), std::abs(max_segment_length(g, Xr) - L0)) / L0;
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result geometry_circle_edges() {
    auto g = build_lagrangian_curve(Vec2(0, 0), 0.4, 0.4, 23);
    double lo = 1e300, hi = 0;
    for (int k = 0; k < g.n_elements(); ++k) {
      double len = (node_of(g.X0, g.segments[k][1]) - node_of(g.X0, g.segments[k][0])).norm();
      lo = std::min(lo, len);
      hi = std::max(hi, len);
    }
    double spread = (hi - lo) / hi;
    return {spread <= 1e-12, bound(spread, 1e-12)};
  }

  Result fem_partition() {
    VerifyRng rng(103);
    double worst = 0;
    for (Family f : {Family::P1, Family::P2, Family::P1isoP2})
      for (int t = 0; t < 100; ++t) {
        double x = rng.uniform(0, 1), y = rng.uniform(0, 1 - x);
        BasisValues bv = eval_basis(ElementType::triangle, f, Vec2(x, y));
        BasisGrads bg = eval_basis_grad(ElementType::triangle, f, Vec2(x, y));
        double sv = 0;
        Vec2 sg(0, 0);
        for (int a = 0; a < bv.n; ++a) sv += bv.v[a];
        for (int a = 0; a < bg.n; ++a) sg += bg.g[a];
        worst = std::max({worst, std::abs(sv - 1.0), sg.norm()});
      }
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result fem_quadrature() {
    double worst = 0;
    auto factorial = [](int n) {
      double r = 1;
      for (int k = 2; k <= n; ++k) r *= k;
      return r;
    };
    for (int n = 1; n <= 8; ++n) {
      QuadratureRule q = segment_rule_n_points(n);
      for (int k = 0; k <= q.exact_degree; ++k) {
        double sum = 0;
        for (int i = 0; i < q.size(); ++i) sum += q.weights[i] * std::pow(q.points[i].x(), k);
        worst = std::max(worst, std::abs(sum - 1.0 / (k + 1)));
      }
    }
    for (int deg = 0; deg <= 6; ++deg) {
      QuadratureRule q = quadrature_rule(ElementType::triangle, deg);
      for (int a = 0; a <= q.exact_degree; ++a)
        for (int b = 0; a + b <= q.exact_degree; ++b) {
          double sum = 0;
          for (int i = 0; i < q.size(); ++i)
            sum += q.weights[i] * std::pow(q.points[i].x(), a) * std::pow(q.points[i].y(), b);
          double exact = factorial(a) * factorial(b) / factorial(a + b + 2);
          worst = std::max(worst, std::abs(sum - exact));
        }
    }
    return {worst <= 5e-14, bound(worst, 5e-14)};
  }

  Result fem_continuity() {
    auto lin = [](const Vec2& x) { return 0.375 - 1.25 * x.x() + 2.5 * x.y(); };
    double worst = 0;
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 5, 4);
    for (Family f : {Family::P1, Family::P2, Family::P1isoP2}) {
      DofMap d = build_dof_map(mesh, f);
      VecX coeff(d.n_dofs);
      for (int i = 0; i < d.n_dofs; ++i) coeff[i] = lin(d.dof_coords[i]);
      auto value_in = [&](int e, const Vec2& p) {
        const auto& t = mesh.triangles[e];
        auto b = barycentric(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], p);
        BasisValues bv = eval_basis(ElementType::triangle, f, Vec2(b[1], b[2]));
        double v = 0;
        for (int a = 0; a < bv.n; ++a) v += bv.v[a] * coeff[d.dof(e, a)];
        return v;
      };
      std::map<std::pair<int, int>, std::vector<int>> edges;
      for (int e = 0; e < mesh.n_triangles(); ++e)
        for (int k = 0; k < 3; ++k) {
          int u = mesh.triangles[e][k], v = mesh.triangles[e][(k + 1) % 3];
          edges[{std::min(u, v), std::max(u, v)}].push_back(e);
        }
      for (const auto& [ev, elems] : edges) {
        if (elems.size() != 2) continue;
        for (double t : {0.5, 0.21, 0.84}) {
          Vec2 p = (1 - t) * mesh.vertices[ev.first] + t * mesh.vertices[ev.second];
          worst = std::max(worst, std::abs(value_in(elems[0], p) - value_in(elems[1], p)));
        }
      }
    }
    return {worst <= 1e-13, bound(worst, 1e-13)};
  }

  Result fluid_skew() {
    VerifyRng rng(104);
    double worst = 0;
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 5, 5);
    for (ElementPair pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
      auto s = make_mixed_spaces(mesh, pair);
      for (int t = 0; t < 3; ++t) {
        VecX w = rng.vector(s.n_vel(), 1.0);
        SpMat N = assemble_convection(s, w);
        SpMat S = SpMat(N + SpMat(N.transpose()));
        double rel = 0;
        for (int k = 0; k < S.outerSize(); ++k)
          for (SpMat::InnerIterator it(S, k); it; ++it) rel = std::max(rel, std::abs(it.value()));
        double scale = 0;
        for (int k = 0; k < N.outerSize(); ++k)
          for (SpMat::InnerIterator it(N, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
        worst = std::max(worst, rel / std::max(1e-300, scale));
      }
    }
    return {worst <= 1e-13, bound(worst, 1e-13)};
  }

  Result fluid_spd() {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 6, 6);
    for (ElementPair pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
      auto s = make_mixed_spaces(mesh, pair);
      auto fm = assemble_fluid_matrices(s, FluidParams{1.0, 0.7});
      auto keep = free_velocity_dofs(s);
      SpMat M = submatrix(fm.M, keep);
      SpMat A = submatrix(SpMat(fm.M + 0.05 * fm.K), keep);
      Eigen::SimplicialLLT<SpMat> lltM(M), lltA(A);
      if (lltM.info() != Eigen::Success) return {false, "mass matrix not positive definite"};
      if (lltA.info() != Eigen::Success) return {false, "mass+viscous matrix not positive definite"};
    }
    return {true, "cholesky succeeded on reduced matrices"};
  }

  // Stokes solve with the given forcing already interpolated into the
  // velocity space; returns (u, p).
  static std::pair<VecX, VecX> stokes_solve(const MixedSpaces& s, const FluidMatrices& fm, const VecX& f) {
    int nv = s.n_vel(), np = s.n_pres();
    SystemBuilder sb(nv + np + 1);
    for (int i : s.vdof.boundary_dofs) {
      sb.fix(2 * i);
      sb.fix(2 * i + 1);
    }
    sb.add_matrix(0, 0, fm.K);
    sb.add_matrix(0, nv, SpMat(fm.B.transpose()));
    sb.add_matrix(nv, 0, fm.B);
    for (int k = 0; k < np; ++k) {
      sb.add(nv + k, nv + np, fm.mean[k]);
      sb.add(nv + np, nv + k, fm.mean[k]);
    }
    sb.add_vector(0, fm.M * f);
    auto sol = solve_sparse(sb.matrix(), sb.rhs(), 1e-10);
    return {sol.x.head(nv), sol.x.segment(nv, np)};
  }

  Result fluid_patch() {
    auto q = [](const Vec2& x) { return 1.2 * x.x() - 0.8 * x.y() + 0.3; };
    Vec2 gq(1.2, -0.8);
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 6, 6);
    std::string detail;
    for (ElementPair pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
      auto s = make_mixed_spaces(mesh, pair);
      auto fm = assemble_fluid_matrices(s, FluidParams{1.0, 1.0});
      auto [u, p] = stokes_solve(s, fm, interpolate_field(s, [&](const Vec2&) { return gq; }));
      double umax = u.lpNorm<Eigen::Infinity>();
      // Pressure against q, modulo the constant fixed by the zero-mean row.
      double dev = 0, shift = 0;
      VecX target(s.n_pres());
      for (int i = 0; i < s.n_pres(); ++i) target[i] = q(s.pdof.dof_coords[i]);
      shift = (p - target).sum() / s.n_pres();
      for (int i = 0; i < s.n_pres(); ++i) dev = std::max(dev, std::abs(p[i] - target[i] - shift));
      if (pair == ElementPair::taylor_hood) {
        // q lies in the pressure space: recovery to solver tolerance.
        if (umax > 1e-8 || dev > 1e-8)
          return {false, "taylor-hood u " + num(umax) + " p dev " + num(dev) + " (tol 1e-08)"};
        detail += "th u " + num(umax) + " p dev " + num(dev) + "; ";
      } else {
        // q is linear, the pressure space piecewise constant: discretization
        // error only.  dof_coords are cell centroids, where the cellwise mean
        // of a linear q is attained.
        if (umax > 0.05 || dev > 0.05)
          return {false, "p0 pair u " + num(umax) + " p dev " + num(dev) + " (tol 0.05)"};
        detail += "p0 u " + num(umax) + " p dev " + num(dev);
      }
    }
    return {true, detail};
  }

  Result fluid_pressure_mean() {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 6, 6);
    double worst = 0;
    for (ElementPair pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
      auto s = make_mixed_spaces(mesh, pair);
      auto fm = assemble_fluid_matrices(s, FluidParams{1.0, 0.4});
      auto f = interpolate_field(s, [](const Vec2& x) {
        return Vec2(std::sin(3 * x.x()) * x.y(), std::cos(2 * x.y()) - x.x());
      });
      auto [u, p] = stokes_solve(s, fm, f);
      worst = std::max(worst, std::abs(fm.mean.dot(p)));
    }
    return {worst <= 1e-10, bound(worst, 1e-10)};
  }

  Result solid_gradient() {
    VerifyRng rng(105);
    LinearElastic model{2.3};
    double worst = 0;
    auto curve = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.2, 13);
    auto disc = build_lagrangian_disc(Vec2(0.5, 0.5), 0.3, 0.2, 1);
    for (const LagrangianMesh* g : {&curve, &disc})
      for (int t = 0; t < 10; ++t) {
        VecX X = g->X0 + rng.vector(g->X0.size(), 0.05);
        VecX G = mutated_elastic_force(*g, X, model);
        for (int d = 0; d < 5; ++d) {
          VecX dir = rng.vector(X.size(), 1.0);
          dir /= dir.norm();
          double h = 1e-6;
          double fd = (elastic_energy(*g, X + h * dir, model) - elastic_energy(*g, X - h * dir, model)) / (2 * h);
          double an = G.dot(dir);
          worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
        }
      }
    return {worst <= 1e-5, bound(worst, 1e-5)};
  }

  Result solid_convexity() {
    VerifyRng rng(106);
    LinearElastic model{1.4};
    auto g = build_lagrangian_disc(Vec2(0.5, 0.5), 0.3, 0.2, 1);
    double worst = -1e300;
    for (int trial = 0; trial < 20; ++trial) {
      VecX X1 = g.X0 + rng.vector(g.X0.size(), 0.1), X2 = g.X0 + rng.vector(g.X0.size(), 0.1);
      double t = rng.uniform(0, 1);
      double e1 = elastic_energy(g, X1, model), e2 = elastic_energy(g, X2, model);
      double emid = elastic_energy(g, VecX(t * X1 + (1 - t) * X2), model);
      worst = std::max(worst, (emid - (t * e1 + (1 - t) * e2)) / std::max(1.0, e1 + e2));
    }
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result solid_translation() {
    VerifyRng rng(107);
    LinearElastic model{3.1};
    auto curve = build_lagrangian_curve(Vec2(0.5, 0.5), 0.25, 0.18, 15);
    auto disc = build_lagrangian_disc(Vec2(0.5, 0.5), 0.3, 0.2, 1);
    double worst = 0;
    for (const LagrangianMesh* g : {&curve, &disc})
      for (int t = 0; t < 5; ++t) {
        VecX X = g->X0 + rng.vector(g->X0.size(), 0.05);
        VecX Xc = X;
        double cx = rng.uniform(-2, 2), cy = rng.uniform(-2, 2);
        for (int i = 0; i < g->n_points(); ++i) {
          Xc[2 * i] += cx;
          Xc[2 * i + 1] += cy;
        }
        double e = elastic_energy(*g, X, model);
        worst = std::max(worst, std::abs(elastic_energy(*g, Xc, model) - e) / std::max(1.0, e));
      }
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result solid_jump_volume() {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 8, 8);
    auto s = make_mixed_spaces(mesh, ElementPair::taylor_hood);
    CouplingConfig cc;
    LinearElastic model{1.7};
    // Structure scaled into one fluid triangle so both quadratures are exact.
    int target = locate_point(mesh, Vec2(0.55, 0.52)).element;
    const auto& tri = mesh.triangles[target];
    Vec2 center = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
    auto disc = build_lagrangian_disc(center, 0.015, 0.012, 1);
    VerifyRng rng(108);
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      VecX X = disc.X0 + rng.vector(disc.X0.size(), 0.002);
      VecX bv = spread_elastic_force(s, disc, X, model, cc);
      VecX bj = spread_force_jump_form(s, disc, X, model, cc);
      worst = std::max(worst, (bv - bj).lpNorm<Eigen::Infinity>() /
                                  std::max(1.0, bv.lpNorm<Eigen::Infinity>()));
    }
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result coupling_constraint_forms() {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 8, 8);
    auto s = make_mixed_spaces(mesh, ElementPair::taylor_hood);
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.2, 14);
    CouplingConfig cc;
    VerifyRng rng(109);
    VecX X = g.X0 + rng.vector(g.X0.size(), 0.03);
    SpMat Lf = expand_components(assemble_interaction(s, g, X, cc));
    SpMat M2 = assemble_solid_matrices(g, LinearElastic{0}).M2;
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
      VecX v = rng.vector(s.n_vel(), 1.0);
      VecX Y = rng.vector(2 * g.n_points(), 1.0);
      VecX mu = rng.vector(2 * g.n_points(), 1.0);
      double algebraic = mu.dot(Lf * v) - mu.dot(M2 * Y);
      double direct = 0;
      detail::for_each_solid_qp(g, X, cc, [&](int, double w, const Vec2& x, const std::array<double, 3>& chi,
                                              int nchi, const std::array<int, 3>& nodes) {
        Vec2 muh(0, 0), Yh(0, 0);
        for (int l = 0; l < nchi; ++l) {
          muh += chi[l] * Vec2(mu[2 * nodes[l]], mu[2 * nodes[l] + 1]);
          Yh += chi[l] * Vec2(Y[2 * nodes[l]], Y[2 * nodes[l] + 1]);
        }
        direct += w * muh.dot(velocity_at(s, v, x) - Yh);
      });
      double scale = std::max(1.0, std::abs(mu.dot(Lf * v)) + std::abs(mu.dot(M2 * Y)));
      worst = std::max(worst, std::abs(algebraic - direct) / scale);
    }
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result coupling_recovery() {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 8, 8);
    auto s = make_mixed_spaces(mesh, ElementPair::taylor_hood);
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.2, 14);
    CouplingConfig cc;
    SpMat Lf = expand_components(assemble_interaction(s, g, g.X0, cc));
    SpMat M2 = assemble_solid_matrices(g, LinearElastic{0}).M2;
    Mat2 A;
    A << 0.4, -0.9, 0.3, 0.6;
    Vec2 b0(0.2, -0.1);
    double worst = 0;
    for (int which = 0; which < 2; ++which) {
      auto field = [&](const Vec2& x) { return which == 0 ? Vec2(0.3, -0.7) : Vec2(A * x + b0); };
      VecX v = interpolate_field(s, field);
      VecX Y = solve_sparse(M2, VecX(Lf * v), 1e-12).x;
      for (int i = 0; i < g.n_points(); ++i)
        worst = std::max(worst, (Vec2(Y[2 * i], Y[2 * i + 1]) - field(node_of(g.X0, i))).norm());
    }
    return {worst <= 1e-9, bound(worst, 1e-9)};
  }

  Result coupling_pairing() {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 8, 8);
    CouplingConfig cc;
    LinearElastic model{2.0};
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.22, 17);
    VerifyRng rng(110);
    VecX X = g.X0 + rng.vector(g.X0.size(), 0.03);
    double worst = 0;
    for (ElementPair pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
      auto s = make_mixed_spaces(mesh, pair);
      VecX b = spread_elastic_force(s, g, X, model, cc);
      VecX G = elastic_force(g, X, model);
      for (int t = 0; t < 3; ++t) {
        VecX u = rng.vector(s.n_vel(), 1.0);
        VecX V = interpolate_velocity(s, u, g, X);
        double scale = std::max(1.0, std::abs(b.dot(u)) + std::abs(G.dot(V)));
        worst = std::max(worst, std::abs(b.dot(u) + G.dot(V)) / scale);
      }
    }
    return {worst <= 1e-11, bound(worst, 1e-11)};
  }

  static Simulation thin_sim(Scheme scheme, double dt) {
    auto mesh = build_eulerian_mesh(Rect{0, 0, 1, 1}, 16, 16);
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.25, 0.15, 11);
    FluidParams fp{1.0, 1.0};
    SolidParams sp = make_solid_params(5.0, 1.3, 1.0, 1, 1.0);
    SchemeConfig sc;
    sc.scheme = scheme;
    sc.dt = dt;
    sc.n_steps = 1;
    return Simulation(std::move(mesh), ElementPair::taylor_hood, {g}, fp, sp, sc);
  }

  // Per-step energy inequality left side and scale from consecutive reports.
  static std::pair<double, double> energy_lhs(const StepReport& prev, const StepReport& cur, double dt) {
    double dkf = (cur.kinetic_fluid - prev.kinetic_fluid) / dt;
    double dks = (cur.kinetic_solid - prev.kinetic_solid) / dt;
    double de = (cur.elastic - prev.elastic) / dt;
    double lhs = dkf + dks + de + cur.viscous_dissipation;
    double scale = std::max(1.0, std::abs(dkf) + std::abs(dks) + std::abs(de) + cur.viscous_dissipation);
    return {lhs, scale};
  }

  Result stepper_dlm_energy() {
    Simulation sim = thin_sim(Scheme::dlm, 0.05);
    StepReport prev = sim.initial_report();
    dlm_rows_.push_back(prev);
    double worst = -1e300;
    for (int i = 0; i < 5; ++i) {
      StepReport r = sim.step();
      dlm_rows_.push_back(r);
      auto [lhs, scale] = energy_lhs(prev, r, 0.05);
      worst = std::max(worst, lhs / scale);
      prev = r;
    }
    return {worst <= 1e-8, bound(worst, 1e-8)};
  }

  Result stepper_feibm_energy() {
    // Warm state at the coarse step, then assert at a deep time-step margin
    // where the explicit spread lag is negligible against the viscous term.
    Simulation warm = thin_sim(Scheme::feibm, 5e-3);
    StepReport last;
    for (int i = 0; i < 40; ++i) last = warm.step();
    feibm_rows_.push_back(last);
    Simulation sim = thin_sim(Scheme::feibm, 1e-6);
    sim.solids[0].X = warm.solids[0].X;
    sim.solids[0].X_prev = warm.solids[0].X;
    sim.set_velocity(warm.fluid.u);
    StepReport prev = sim.initial_report();
    for (int i = 0; i < 3; ++i) prev = sim.step(); // absorb the restart transient
    double worst = -1e300;
    for (int i = 0; i < 5; ++i) {
      StepReport r = sim.step();
      feibm_rows_.push_back(r);
      if (!(r.cfl_lhs <= 0.1 * r.cfl_rhs_scale))
        return {false, "time-step margin gate violated; inequality not applicable"};
      auto [lhs, scale] = energy_lhs(prev, r, 1e-6);
      worst = std::max(worst, lhs / scale);
      prev = r;
    }
    return {worst <= 1e-6, bound(worst, 1e-6)};
  }

  Result stepper_divergence() {
    double worst = 0;
    for (const auto& rows : {dlm_rows_, feibm_rows_})
      for (const auto& r : rows)
        worst = std::max(worst, r.div_residual / std::max(1.0, std::sqrt(2.0 * r.kinetic_fluid)));
    if (dlm_rows_.empty() && feibm_rows_.empty()) return {false, "no stepper runs recorded"};
    return {worst <= 1e-9, bound(worst, 1e-9)};
  }

  Result stepper_constraint() {
    double worst = 0;
    int counted = 0;
    for (const auto& r : dlm_rows_)
      if (std::isfinite(r.constraint_residual)) {
        worst = std::max(worst, r.constraint_residual / std::max(1.0, std::sqrt(2.0 * r.kinetic_fluid)));
        ++counted;
      }
    if (counted == 0) return {false, "no multiplier steps recorded"};
    return {worst <= 1e-9, bound(worst, 1e-9)};
  }

  Result stepper_determinism() {
    auto once = [] {
      Simulation sim = thin_sim(Scheme::dlm, 0.05);
      TimeSeries s;
      s.append(sim.initial_report());
      for (int i = 0; i < 3; ++i) s.append(sim.step());
      return format_csv(s);
    };
    std::string a = once(), b = once();
    return {a == b, a == b ? "byte-identical series" : "series bytes differ"};
  }

  Result diag_area_rigid() {
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.2, 24);
    VerifyRng rng(111);
    VecX X = g.X0 + rng.vector(g.X0.size(), 0.02);
    double a0 = enclosed_area(g, X);
    double c = std::cos(1.1), s = std::sin(1.1);
    VecX Xt = X, Xr = X;
    for (int i = 0; i < g.n_points(); ++i) {
      Xt[2 * i] += 4.2;
      Xt[2 * i + 1] -= 0.9;
      Xr[2 * i] = c * X[2 * i] - s * X[2 * i + 1];
      Xr[2 * i + 1] = s * X[2 * i] + c * X[2 * i + 1];
    }
    double worst = std::max(std::abs(enclosed_area(g, Xt) - a0), std::abs(enclosed_area(g, Xr) - a0)) /
                   std::abs(a0);
    return {worst <= 1e-12, bound(worst, 1e-12)};
  }

  Result diag_area_orientation() {
    auto g = build_lagrangian_curve(Vec2(0.5, 0.5), 0.3, 0.2, 16);
    VecX Xrev(g.X0.size());
    int m = g.n_points();
    for (int i = 0; i < m; ++i) {
      Xrev[2 * i] = g.X0[2 * ((m - i) % m)];
      Xrev[2 * i + 1] = g.X0[2 * ((m - i) % m) + 1];
    }
    double a = enclosed_area(g, g.X0), ar = enclosed_area(g, Xrev);
    double err = std::abs(a + ar) / std::abs(a);
    return {a > 0 && err <= 1e-12, "reversed/forward " + num(ar) + "/" + num(a)};
  }

  Result exp_config_rejection() {
    int caught = 0;
    for (const char* text : {"dt = 0\n", "no_such_key = 1\n", "geometry.m = 2\n", "solid.rho = 0.1\n"}) {
      try {
        parse_config_text(text);
      } catch (const ConfigError&) {
        ++caught;
      }
    }
    bool valid_ok = true;
    try {
      parse_config_text("preset = thin_energy\n");
    } catch (const std::exception&) {
      valid_ok = false;
    }
    return {caught == 4 && valid_ok, std::to_string(caught) + " of 4 rejected; valid preset accepted"};
  }

  Result exp_determinism() {
    ExperimentConfig c =
        parse_config_text("preset = two_circles\nnx = 8\nny = 8\ngeometry.m = 12\nn_steps = 2\n");
    std::string a = format_csv(run_experiment(c)), b = format_csv(run_experiment(c));
    return {a == b, a == b ? "byte-identical series" : "series bytes differ"};
  }
};

} // namespace detail

// Runs the cross-module invariant suite.  The optional mutation seeds a known
// defect so the suite can demonstrate it catches one.
inline VerifyReport run_verification(VerifyMutation mutation = VerifyMutation::none) {
  return detail::Verifier(mutation).run();
}

} // namespace ibfem
