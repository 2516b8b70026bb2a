#include <catch2/catch_amalgamated.hpp>

#include "ibfem/fluid.hpp"
#include "oracles.hpp"

using namespace ibfem;

namespace {

// Nodal interpolation of an analytic velocity field.
template <typename F>
VecX interpolate_velocity(const MixedSpaces& s, F&& field) {
  VecX u(s.n_vel());
  for (int i = 0; i < s.vdof.n_dofs; ++i) {
    Vec2 v = field(s.vdof.dof_coords[i]);
    u[2 * i] = v.x();
    u[2 * i + 1] = v.y();
  }
  return u;
}

VecX random_vector(int n, double lo = -1, double hi = 1) {
  VecX v(n);
  for (int i = 0; i < n; ++i) v[i] = oracle::uniform(lo, hi);
  return v;
}

// Independent evaluation of FE fields at quadrature points of degree `deg`,
// reduced by `body(x, w, u_val, u_grad, v_val, v_grad, w_val)`.
template <typename Body>
void scan_fields(const MixedSpaces& s, const VecX& uc, const VecX& vc, const VecX& wc, int deg, Body&& body) {
  auto q = quadrature_rule(ElementType::triangle, deg);
  for (int e = 0; e < s.vmesh->n_triangles(); ++e) {
    auto g = element_geometry(*s.vmesh, e);
    for (int k = 0; k < q.size(); ++k) {
      auto bv = eval_basis(ElementType::triangle, s.vfam, q.points[k]);
      auto bg = eval_basis_grad(ElementType::triangle, s.vfam, q.points[k]);
      Vec2 uv(0, 0), vv(0, 0), wv(0, 0);
      Mat2 ug = Mat2::Zero(), vg = Mat2::Zero();
      for (int a = 0; a < bv.n; ++a) {
        int i = s.vdof.dof(e, a);
        Vec2 grad = g.jac_inv_t * bg.g[a];
        for (int c = 0; c < 2; ++c) {
          uv[c] += bv.v[a] * uc[2 * i + c];
          vv[c] += bv.v[a] * vc[2 * i + c];
          wv[c] += bv.v[a] * wc[2 * i + c];
          ug.row(c) += grad.transpose() * uc[2 * i + c];
          vg.row(c) += grad.transpose() * vc[2 * i + c];
        }
      }
      body(g.map(q.points[k]), q.weights[k] * 2.0 * g.area, uv, ug, vv, vg, wv);
    }
  }
}

} // namespace

TEST_CASE("mass matrix reproduces analytic L2 norms", "[fluid]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 6, 6);
  for (auto pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
    auto s = make_mixed_spaces(m, pair);
    auto M = assemble_velocity_mass(s);
    CHECK((SpMat(M.transpose()) - M).norm() < 1e-14 * M.norm());
    VecX ones = interpolate_velocity(s, [](const Vec2&) { return Vec2(1, 0); });
    CHECK(ones.dot(M * ones) == Catch::Approx(1.0).epsilon(1e-13));
    VecX lin = interpolate_velocity(s, [](const Vec2& x) { return Vec2(x.x(), x.y()); });
    if (pair == ElementPair::taylor_hood) // exact for P2 interpolation
      CHECK(lin.dot(M * lin) == Catch::Approx(2.0 / 3.0).epsilon(1e-13));
  }
}

TEST_CASE("viscous form energy on canonical fields", "[fluid]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 6, 6);
  double nu = 0.37;
  for (auto pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
    auto s = make_mixed_spaces(m, pair);
    auto K = assemble_viscous(s, nu);
    CHECK((SpMat(K.transpose()) - K).norm() < 1e-13 * K.norm());

    // Shear (y, 0): (grad+grad^T) has two unit off-diagonals, energy 2 nu |Omega|.
    VecX shear = interpolate_velocity(s, [](const Vec2& x) { return Vec2(x.y(), 0); });
    CHECK(shear.dot(K * shear) == Catch::Approx(2.0 * nu).epsilon(1e-12));
    // Rigid motions are in the kernel.
    VecX trans = interpolate_velocity(s, [](const Vec2&) { return Vec2(3, -2); });
    CHECK(std::abs(trans.dot(K * trans)) < 1e-12);
    VecX rot = interpolate_velocity(s, [](const Vec2& x) { return Vec2(-x.y(), x.x()); });
    CHECK(std::abs(rot.dot(K * rot)) < 1e-11);
    // Plane strain (x, -y): (grad+grad^T) = diag(2,-2), energy 8 nu |Omega|.
    VecX strain = interpolate_velocity(s, [](const Vec2& x) { return Vec2(x.x(), -x.y()); });
    CHECK(strain.dot(K * strain) == Catch::Approx(8.0 * nu).epsilon(1e-12));
    // PSD on random vectors.
    oracle::rng(31u);
    for (int t = 0; t < 5; ++t) {
      VecX r = random_vector(s.n_vel());
      CHECK(r.dot(K * r) >= -1e-11 * r.squaredNorm());
    }
  }
  CHECK_THROWS_AS(assemble_viscous(make_mixed_spaces(m, ElementPair::taylor_hood), 0.0), std::invalid_argument);
}

TEST_CASE("divergence rows against independent quadrature", "[fluid]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 5, 4);
  oracle::rng(77u);
  for (auto pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
    auto s = make_mixed_spaces(m, pair);
    auto B = assemble_divergence(s);
    auto mean = assemble_pressure_mean(s);

    // Divergence-free linear field is in the kernel of every row.
    VecX solenoidal = interpolate_velocity(s, [](const Vec2& x) { return Vec2(x.x(), -x.y()); });
    CHECK((B * solenoidal).norm() < 1e-12);
    // div (x, 0) = 1, so B u = -mean.
    VecX ux = interpolate_velocity(s, [](const Vec2& x) { return Vec2(x.x(), 0); });
    CHECK((B * ux + mean).norm() < 1e-12);
    CHECK(mean.sum() == Catch::Approx(1.0).epsilon(1e-13));

    // Random coefficients against a higher-degree independent loop.
    VecX u = random_vector(s.n_vel());
    VecX rows = VecX::Zero(s.n_pres());
    scan_fields(s, u, u, u, 6, [&](const Vec2& x, double w, const Vec2&, const Mat2& ug, const Vec2&, const Mat2&,
                                   const Vec2&) {
      double div = ug(0, 0) + ug(1, 1);
      auto loc = oracle::brute_locate(*s.coarse, x);
      auto pv = eval_basis(ElementType::triangle, s.pfam, loc.ref());
      for (int a = 0; a < pv.n; ++a) rows[s.pdof.dof(loc.element, a)] -= w * pv.v[a] * div;
    });
    CHECK((B * u - rows).norm() < 1e-10 * std::max(1.0, rows.norm()));
  }
}

TEST_CASE("pressure mean row integrates pressures", "[fluid]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 6, 5);
  auto th = make_mixed_spaces(m, ElementPair::taylor_hood);
  auto mean = assemble_pressure_mean(th);
  VecX p(th.n_pres());
  for (int i = 0; i < th.pdof.n_dofs; ++i)
    p[i] = 2.0 + 3.0 * th.pdof.dof_coords[i].x() - th.pdof.dof_coords[i].y();
  CHECK(mean.dot(p) == Catch::Approx(2.0 + 1.5 - 0.5).epsilon(1e-13));

  auto iso = make_mixed_spaces(m, ElementPair::p1_iso_p2_p0);
  auto mean0 = assemble_pressure_mean(iso);
  for (int e = 0; e < iso.n_pres(); ++e) CHECK(mean0[e] == Catch::Approx(1.0 / 60.0).epsilon(1e-13));
}

TEST_CASE("convection is exactly skew and matches independent quadrature", "[fluid]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 4, 5);
  oracle::rng(41u);
  for (auto pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
    auto s = make_mixed_spaces(m, pair);
    VecX w = random_vector(s.n_vel());
    auto N = assemble_convection(s, w);
    CHECK((SpMat(N.transpose()) + N).norm() < 1e-15 * N.norm());
    for (int t = 0; t < 5; ++t) {
      VecX r = random_vector(s.n_vel());
      CHECK(std::abs(r.dot(N * r)) < 1e-12 * r.squaredNorm() * std::max(1.0, w.norm()));
    }

    VecX u = random_vector(s.n_vel()), v = random_vector(s.n_vel());
    double direct = 0;
    scan_fields(s, u, v, w, 6, [&](const Vec2&, double wq, const Vec2& uv, const Mat2& ug, const Vec2& vv,
                                   const Mat2& vg, const Vec2& wv) {
      direct += 0.5 * wq * ((ug * wv).dot(vv) - (vg * wv).dot(uv));
    });
    CHECK(v.dot(N * u) == Catch::Approx(direct).margin(1e-10 * std::max(1.0, std::abs(direct))));
  }
}

TEST_CASE("system builder eliminates dirichlet rows symmetrically", "[linalg]") {
  SystemBuilder sb(4);
  sb.fix(2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) sb.add(i, j, 1.0 + i + 10.0 * j);
  sb.add_rhs(0, 5.0);
  sb.add_rhs(2, 7.0); // dropped
  SpMat A = sb.matrix();
  MatX D = MatX(A);
  for (int j = 0; j < 4; ++j) {
    CHECK(D(2, j) == (j == 2 ? 1.0 : 0.0));
    CHECK(D(j, 2) == (j == 2 ? 1.0 : 0.0));
  }
  CHECK(sb.rhs()[0] == 5.0);
  CHECK(sb.rhs()[2] == 0.0);
}

TEST_CASE("sparse solve guards", "[linalg]") {
  SpMat A(2, 2);
  std::vector<Triplet> t = {{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 2.0}, {1, 1, 4.0}}; // singular
  A.setFromTriplets(t.begin(), t.end());
  VecX b(2);
  b << 1, 0;
  CHECK_THROWS_AS(solve_sparse(A, b, 1e-9), FactorizationError);
  CHECK_THROWS_AS(solve_sparse(A, VecX::Zero(3), 1e-9), std::invalid_argument);

  SpMat G(2, 2);
  t = {{0, 0, 2.0}, {1, 1, 3.0}};
  G.setFromTriplets(t.begin(), t.end());
  auto r = solve_sparse(G, b, 1e-12);
  CHECK(r.x[0] == Catch::Approx(0.5));
  CHECK(r.residual < 1e-15);
}

TEST_CASE("stokes saddle solve matches a dense factorization", "[fluid]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 5, 5);
  oracle::rng(19u);
  for (auto pair : {ElementPair::taylor_hood, ElementPair::p1_iso_p2_p0}) {
    auto s = make_mixed_spaces(m, pair);
    FluidParams fp{1.0, 0.8};
    auto fm = assemble_fluid_matrices(s, fp);
    int nv = s.n_vel(), np = s.n_pres(), n = nv + np + 1;

    VecX f = interpolate_velocity(s, [](const Vec2& x) {
      return Vec2(std::sin(3 * x.x()) * x.y(), std::cos(2 * x.y()) - x.x());
    });
    SystemBuilder sb(n);
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

    auto sol = solve_sparse(sb.matrix(), sb.rhs(), 1e-9);
    VecX u = sol.x.head(nv), p = sol.x.segment(nv, np);
    CHECK((fm.B * u).norm() < 1e-10);
    CHECK(std::abs(fm.mean.dot(p)) < 1e-10);
    CHECK(std::abs(sol.x[n - 1]) < 1e-10); // multiplier of the mean constraint

    MatX D = MatX(sb.matrix());
    VecX dense = Eigen::FullPivLU<MatX>(D).solve(sb.rhs());
    CHECK((sol.x - dense).norm() < 1e-9 * std::max(1.0, dense.norm()));
  }
}
