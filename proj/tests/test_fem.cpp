#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "ibfem/fem.hpp"
#include "oracles.hpp"

using namespace ibfem;

TEST_CASE("segment quadrature integrates polynomials exactly", "[fem]") {
  for (int n = 1; n <= 12; ++n) {
    auto q = segment_rule_n_points(n);
    REQUIRE(q.size() == n);
    REQUIRE(q.exact_degree == 2 * n - 1);
    double wsum = 0;
    for (double w : q.weights) {
      CHECK(w > 0);
      wsum += w;
    }
    CHECK(wsum == Catch::Approx(1.0).epsilon(1e-14));
    for (int k = 0; k <= q.exact_degree; ++k) {
      double val = 0;
      for (int i = 0; i < q.size(); ++i) val += q.weights[i] * std::pow(q.points[i].x(), k);
      CHECK(val == Catch::Approx(1.0 / (k + 1)).epsilon(1e-13));
    }
  }
  auto q = quadrature_rule(ElementType::segment, 9);
  CHECK(q.exact_degree >= 9);
  CHECK_THROWS_AS(quadrature_rule(ElementType::segment, 200), CapabilityError);
}

TEST_CASE("triangle quadrature integrates monomials exactly", "[fem]") {
  for (int deg = 0; deg <= 6; ++deg) {
    auto q = quadrature_rule(ElementType::triangle, deg);
    REQUIRE(q.exact_degree >= deg);
    double wsum = 0;
    for (double w : q.weights) {
      CHECK(w > 0);
      wsum += w;
    }
    CHECK(wsum == Catch::Approx(0.5).epsilon(1e-14));
    for (int i = 0; i + 0 <= q.exact_degree; ++i)
      for (int j = 0; i + j <= q.exact_degree; ++j) {
        double val = 0;
        for (int k = 0; k < q.size(); ++k)
          val += q.weights[k] * std::pow(q.points[k].x(), i) * std::pow(q.points[k].y(), j);
        CHECK(val == Catch::Approx(oracle::tri_monomial_integral(i, j)).epsilon(1e-13));
      }
  }
  CHECK_THROWS_AS(quadrature_rule(ElementType::triangle, 7), CapabilityError);
}

TEST_CASE("composite triangle rules reach requested point counts", "[fem]") {
  for (int n : {1, 3, 5, 7, 12, 13, 28, 40, 70, 100}) {
    auto q = triangle_rule_min_points(n);
    REQUIRE(q.size() >= n);
    double wsum = 0;
    for (double w : q.weights) {
      CHECK(w > 0);
      wsum += w;
    }
    CHECK(wsum == Catch::Approx(0.5).epsilon(1e-13));
    // Composites keep the 7-point rule's degree-5 exactness.
    if (n >= 13) CHECK(q.exact_degree == 5);
    for (int i = 0; i <= q.exact_degree; ++i)
      for (int j = 0; i + j <= q.exact_degree; ++j) {
        double val = 0;
        for (int k = 0; k < q.size(); ++k)
          val += q.weights[k] * std::pow(q.points[k].x(), i) * std::pow(q.points[k].y(), j);
        CHECK(val == Catch::Approx(oracle::tri_monomial_integral(i, j)).epsilon(1e-12));
      }
  }
}

TEST_CASE("basis functions: partition of unity and nodal values", "[fem]") {
  oracle::rng(7u);
  for (int trial = 0; trial < 50; ++trial) {
    double x = oracle::uniform(0, 1), y = oracle::uniform(0, 1 - x);
    Vec2 p(x, y);
    for (Family f : {Family::P1, Family::P2, Family::P1isoP2}) {
      auto v = eval_basis(ElementType::triangle, f, p);
      auto g = eval_basis_grad(ElementType::triangle, f, p);
      double vs = 0;
      Vec2 gs(0, 0);
      for (int a = 0; a < v.n; ++a) {
        vs += v.v[a];
        gs += g.g[a];
      }
      CHECK(vs == Catch::Approx(1.0).margin(1e-14));
      CHECK(gs.norm() < 1e-13);
    }
    auto v0 = eval_basis(ElementType::triangle, Family::P0, p);
    CHECK(v0.v[0] == 1.0);
    auto vs = eval_basis(ElementType::segment, Family::P1, Vec2(x, 0));
    CHECK(vs.v[0] + vs.v[1] == Catch::Approx(1.0).margin(1e-15));
  }

  const Vec2 p2_nodes[6] = {{0, 0}, {1, 0}, {0, 1}, {0.5, 0}, {0.5, 0.5}, {0, 0.5}};
  for (int b = 0; b < 6; ++b) {
    auto v = eval_basis(ElementType::triangle, Family::P2, p2_nodes[b]);
    for (int a = 0; a < 6; ++a) CHECK(v.v[a] == Catch::Approx(a == b ? 1.0 : 0.0).margin(1e-14));
  }
  CHECK_THROWS_AS(eval_basis(ElementType::segment, Family::P2, Vec2(0.5, 0)), CapabilityError);
}

TEST_CASE("basis gradients match finite differences", "[fem]") {
  oracle::rng(8u);
  double eps = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    double x = oracle::uniform(0.05, 0.9), y = oracle::uniform(0.05, 0.9 - x);
    Vec2 p(x, y);
    for (Family f : {Family::P1, Family::P2}) {
      auto g = eval_basis_grad(ElementType::triangle, f, p);
      for (int a = 0; a < g.n; ++a) {
        double dx = (eval_basis(ElementType::triangle, f, p + Vec2(eps, 0)).v[a] -
                     eval_basis(ElementType::triangle, f, p - Vec2(eps, 0)).v[a]) /
                    (2 * eps);
        double dy = (eval_basis(ElementType::triangle, f, p + Vec2(0, eps)).v[a] -
                     eval_basis(ElementType::triangle, f, p - Vec2(0, eps)).v[a]) /
                    (2 * eps);
        CHECK(g.g[a].x() == Catch::Approx(dx).margin(1e-8));
        CHECK(g.g[a].y() == Catch::Approx(dy).margin(1e-8));
      }
    }
  }
}

TEST_CASE("dof maps", "[fem]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 5, 3);
  int nv = 6 * 4, nx = 5, ny = 3;

  auto p1 = build_dof_map(m, Family::P1);
  CHECK(p1.n_dofs == nv);
  CHECK(static_cast<int>(p1.boundary_dofs.size()) == 2 * (nx + ny));

  auto p0 = build_dof_map(m, Family::P0);
  CHECK(p0.n_dofs == m.n_triangles());
  CHECK(p0.boundary_dofs.empty());

  auto p2 = build_dof_map(m, Family::P2);
  int n_edges = nx * (ny + 1) + (nx + 1) * ny + nx * ny;
  CHECK(p2.n_dofs == nv + n_edges);
  CHECK(static_cast<int>(p2.boundary_dofs.size()) == 2 * 2 * (nx + ny));
  // Edge dof coordinates are midpoints of their element edge, and the shared
  // edge dof agrees between neighboring elements.
  const int le[3][2] = {{0, 1}, {1, 2}, {2, 0}};
  for (int e = 0; e < m.n_triangles(); ++e)
    for (int k = 0; k < 3; ++k) {
      int u = m.triangles[e][le[k][0]], v = m.triangles[e][le[k][1]];
      Vec2 mid = 0.5 * (m.vertices[u] + m.vertices[v]);
      CHECK((p2.dof_coords[p2.dof(e, 3 + k)] - mid).norm() < 1e-14);
    }
}

TEST_CASE("taylor-hood spaces", "[fem]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 4, 4);
  auto s = make_mixed_spaces(m, ElementPair::taylor_hood);
  CHECK(s.vmesh == &m);
  CHECK(s.vfam == Family::P2);
  CHECK(s.pfam == Family::P1);
  for (int e = 0; e < m.n_triangles(); ++e) CHECK(s.parent[e] == e);

  // A linear velocity field is represented exactly.
  auto field = [](const Vec2& x) { return Vec2(1 + 2 * x.x() + 3 * x.y(), 4 - x.x() + x.y()); };
  VecX u(s.n_vel());
  for (int i = 0; i < s.vdof.n_dofs; ++i) {
    Vec2 val = field(s.vdof.dof_coords[i]);
    u[2 * i] = val.x();
    u[2 * i + 1] = val.y();
  }
  oracle::rng(55u);
  for (int t = 0; t < 100; ++t) {
    Vec2 p = oracle::random_point(m.domain);
    CHECK((velocity_at(s, u, p) - field(p)).norm() < 1e-12);
  }
}

TEST_CASE("p1-iso-p2 refined mesh equals the structured double mesh", "[fem]") {
  auto coarse = build_eulerian_mesh(Rect{0.2, 0.1, 1.4, 0.9}, 3, 2);
  auto s = make_mixed_spaces(coarse, ElementPair::p1_iso_p2_p0);
  REQUIRE(s.vmesh->n_triangles() == 4 * coarse.n_triangles());
  CHECK(s.vfam == Family::P1isoP2);
  CHECK(s.pfam == Family::P0);
  CHECK(s.pdof.n_dofs == coarse.n_triangles());

  // Oracle: quarter every coarse triangle by edge midpoints; the resulting
  // triangle set must equal the structured 2nx x 2ny triangulation.
  auto key_of = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    std::array<std::pair<long long, long long>, 3> k;
    auto snap = [](const Vec2& p) {
      return std::make_pair(static_cast<long long>(std::llround(p.x() * 1e9)),
                            static_cast<long long>(std::llround(p.y() * 1e9)));
    };
    k = {snap(a), snap(b), snap(c)};
    std::sort(k.begin(), k.end());
    return k;
  };
  std::set<std::array<std::pair<long long, long long>, 3>> refined, structured;
  for (const auto& t : coarse.triangles) {
    Vec2 a = coarse.vertices[t[0]], b = coarse.vertices[t[1]], c = coarse.vertices[t[2]];
    Vec2 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
    refined.insert(key_of(a, ab, ca));
    refined.insert(key_of(ab, b, bc));
    refined.insert(key_of(ca, bc, c));
    refined.insert(key_of(ab, bc, ca));
  }
  for (const auto& t : s.vmesh->triangles)
    structured.insert(key_of(s.vmesh->vertices[t[0]], s.vmesh->vertices[t[1]], s.vmesh->vertices[t[2]]));
  CHECK(refined == structured);

  // Every fine triangle lies inside its parent coarse triangle.
  for (int e = 0; e < s.vmesh->n_triangles(); ++e) {
    const auto& pt = coarse.triangles[s.parent[e]];
    for (int a = 0; a < 3; ++a) {
      auto l = barycentric(coarse.vertices[pt[0]], coarse.vertices[pt[1]], coarse.vertices[pt[2]],
                           s.vmesh->vertices[s.vmesh->triangles[e][a]]);
      CHECK(std::min({l[0], l[1], l[2]}) >= -1e-12);
    }
  }
}

TEST_CASE("pressure evaluation", "[fem]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 1, 1}, 4, 4);

  auto th = make_mixed_spaces(m, ElementPair::taylor_hood);
  VecX p_lin(th.n_pres());
  for (int i = 0; i < th.pdof.n_dofs; ++i)
    p_lin[i] = 2.0 + 3.0 * th.pdof.dof_coords[i].x() - th.pdof.dof_coords[i].y();
  oracle::rng(66u);
  for (int t = 0; t < 50; ++t) {
    Vec2 q = oracle::random_point(m.domain);
    CHECK(pressure_at(th, p_lin, q) == Catch::Approx(2.0 + 3.0 * q.x() - q.y()).margin(1e-12));
  }

  auto iso = make_mixed_spaces(m, ElementPair::p1_iso_p2_p0);
  VecX p0(iso.n_pres());
  for (int e = 0; e < iso.n_pres(); ++e) p0[e] = static_cast<double>(e);
  for (int t = 0; t < 50; ++t) {
    Vec2 q = oracle::random_point(m.domain);
    int e = oracle::brute_locate(m, q).element;
    CHECK(pressure_at(iso, p0, q) == Catch::Approx(static_cast<double>(e)).margin(1e-13));
  }
}

TEST_CASE("element geometry mapping", "[fem]") {
  auto m = build_eulerian_mesh(Rect{0, 0, 2, 1}, 4, 2);
  for (int e = 0; e < m.n_triangles(); ++e) {
    auto g = element_geometry(m, e);
    const auto& t = m.triangles[e];
    CHECK((g.map(Vec2(0, 0)) - m.vertices[t[0]]).norm() < 1e-14);
    CHECK((g.map(Vec2(1, 0)) - m.vertices[t[1]]).norm() < 1e-14);
    CHECK((g.map(Vec2(0, 1)) - m.vertices[t[2]]).norm() < 1e-14);
    CHECK(g.area > 0);
  }
}
