#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "ibfem/common.hpp"
#include "ibfem/geometry.hpp"

namespace ibfem {

enum class ElementType { segment, triangle };
enum class Family { P0, P1, P2, P1isoP2 };
enum class ElementPair { taylor_hood, p1_iso_p2_p0 };

// Points live on the reference element: [0,1] for segments (y ignored),
// the unit triangle {x >= 0, y >= 0, x + y <= 1} otherwise.  Weights sum to
// the reference measure (1 resp. 1/2).
struct QuadratureRule {
  ElementType type;
  std::vector<Vec2> points;
  std::vector<double> weights;
  int exact_degree = 0;
  int size() const { return static_cast<int>(points.size()); }
};

namespace detail {

inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
  // Nodes and weights on [-1,1] by Newton iteration on the recurrence.
  std::vector<std::pair<double, double>> out(n);
  for (int k = 0; k < n; ++k) {
    double x = std::cos(M_PI * (4.0 * k + 3.0) / (4.0 * n + 2.0));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    out[k] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct TriPoint {
  double x, y, w;
};

// Symmetric positive-weight rules on the unit triangle, weights scaled so
// they sum to 1/2.
inline std::vector<TriPoint> triangle_rule_points(int degree) {
  std::vector<TriPoint> pts;
  auto push3 = [&](double a, double w) {
    double b = 1.0 - 2.0 * a;
    pts.push_back({a, a, w});
    pts.push_back({b, a, w});
    pts.push_back({a, b, w});
  };
  auto push6 = [&](double a, double b, double w) {
    double c = 1.0 - a - b;
    pts.push_back({a, b, w});
    pts.push_back({b, a, w});
    pts.push_back({b, c, w});
    pts.push_back({c, b, w});
    pts.push_back({c, a, w});
    pts.push_back({a, c, w});
  };
  switch (degree) {
  case 0:
  case 1:
    pts.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0});
    break;
  case 2:
    push3(1.0 / 6.0, 1.0 / 3.0);
    break;
  case 3:
  case 4:
    push3(0.445948490915965, 0.223381589678011);
    push3(0.091576213509771, 0.109951743655322);
    break;
  case 5:
    pts.push_back({1.0 / 3.0, 1.0 / 3.0, 0.225});
    push3(0.470142064105115, 0.132394152788506);
    push3(0.101286507323456, 0.125939180544827);
    break;
  case 6:
    push3(0.063089014491502, 0.050844906370207);
    push3(0.249286745170910, 0.116786275726379);
    push6(0.310352451033785, 0.053145049844816, 0.082851075618374);
    break;
  default:
    throw CapabilityError("triangle quadrature: no rule of degree " + std::to_string(degree));
  }
  for (auto& p : pts) p.w *= 0.5;
  return pts;
}

} // namespace detail

inline QuadratureRule quadrature_rule(ElementType type, int degree) {
  if (degree < 0) throw std::invalid_argument("quadrature_rule: negative degree");
  QuadratureRule q;
  q.type = type;
  if (type == ElementType::segment) {
    int n = degree / 2 + 1;
    if (n > 64) throw CapabilityError("segment quadrature: degree " + std::to_string(degree) + " too large");
    for (auto [x, w] : detail::gauss_legendre(n)) {
      q.points.emplace_back(0.5 * (x + 1.0), 0.0);
      q.weights.push_back(0.5 * w);
    }
    q.exact_degree = 2 * n - 1;
  } else {
    auto pts = detail::triangle_rule_points(degree);
    for (const auto& p : pts) {
      q.points.emplace_back(p.x, p.y);
      q.weights.push_back(p.w);
    }
    q.exact_degree = degree <= 1 ? 1 : (degree == 3 ? 4 : degree);
  }
  return q;
}

inline QuadratureRule segment_rule_n_points(int n) {
  if (n < 1 || n > 64) throw CapabilityError("segment quadrature: point count out of range");
  return quadrature_rule(ElementType::segment, 2 * n - 1);
}

// Smallest triangle rule with at least n points: the degree table up to 12
// points, then the 7-point rule composited over 4^k uniform subtriangles.
inline QuadratureRule triangle_rule_min_points(int n) {
  if (n < 1) throw std::invalid_argument("triangle_rule_min_points: n must be positive");
  for (int deg : {1, 2, 4, 5, 6}) {
    QuadratureRule q = quadrature_rule(ElementType::triangle, deg);
    if (q.size() >= n) return q;
  }
  QuadratureRule base = quadrature_rule(ElementType::triangle, 5);
  int levels = 1;
  while (base.size() * (1 << (2 * levels)) < n) ++levels;
  if (levels > 6) throw CapabilityError("triangle_rule_min_points: point count too large");
  QuadratureRule q;
  q.type = ElementType::triangle;
  q.exact_degree = base.exact_degree;
  struct Child {
    Vec2 a, b, c;
  };
  std::vector<Child> cells = {{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)}};
  for (int l = 0; l < levels; ++l) {
    std::vector<Child> next;
    next.reserve(4 * cells.size());
    for (const auto& t : cells) {
      Vec2 ab = 0.5 * (t.a + t.b), bc = 0.5 * (t.b + t.c), ca = 0.5 * (t.c + t.a);
      next.push_back({t.a, ab, ca});
      next.push_back({ab, t.b, bc});
      next.push_back({ca, bc, t.c});
      next.push_back({ab, bc, ca});
    }
    cells = std::move(next);
  }
  double scale = 1.0 / static_cast<double>(cells.size());
  for (const auto& t : cells)
    for (int i = 0; i < base.size(); ++i) {
      const Vec2& p = base.points[i];
      q.points.push_back(t.a + p.x() * (t.b - t.a) + p.y() * (t.c - t.a));
      q.weights.push_back(base.weights[i] * scale);
    }
  return q;
}

inline int n_basis(ElementType type, Family f) {
  if (type == ElementType::segment) {
    if (f == Family::P1) return 2;
    throw CapabilityError("segment elements support only P1");
  }
  switch (f) {
  case Family::P0: return 1;
  case Family::P1:
  case Family::P1isoP2: return 3;
  case Family::P2: return 6;
  }
  return 0;
}

struct BasisValues {
  int n = 0;
  std::array<double, 6> v{};
};

struct BasisGrads {
  int n = 0;
  std::array<Vec2, 6> g{}; // reference-coordinate gradients
};

// P2 ordering: vertex functions first, then edge midside functions for edges
// (0,1), (1,2), (2,0).
inline BasisValues eval_basis(ElementType type, Family f, const Vec2& p) {
  BasisValues out;
  if (type == ElementType::segment) {
    if (f != Family::P1) throw CapabilityError("segment elements support only P1");
    out.n = 2;
    out.v[0] = 1.0 - p.x();
    out.v[1] = p.x();
    return out;
  }
  double l0 = 1.0 - p.x() - p.y(), l1 = p.x(), l2 = p.y();
  switch (f) {
  case Family::P0:
    out.n = 1;
    out.v[0] = 1.0;
    break;
  case Family::P1:
  case Family::P1isoP2:
    out.n = 3;
    out.v = {l0, l1, l2};
    break;
  case Family::P2:
    out.n = 6;
    out.v = {l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0};
    break;
  }
  return out;
}

inline BasisGrads eval_basis_grad(ElementType type, Family f, const Vec2& p) {
  BasisGrads out;
  if (type == ElementType::segment) {
    if (f != Family::P1) throw CapabilityError("segment elements support only P1");
    out.n = 2;
    out.g[0] = Vec2(-1, 0);
    out.g[1] = Vec2(1, 0);
    return out;
  }
  const Vec2 d0(-1, -1), d1(1, 0), d2(0, 1);
  double l0 = 1.0 - p.x() - p.y(), l1 = p.x(), l2 = p.y();
  switch (f) {
  case Family::P0:
    out.n = 1;
    out.g[0] = Vec2(0, 0);
    break;
  case Family::P1:
  case Family::P1isoP2:
    out.n = 3;
    out.g = {d0, d1, d2};
    break;
  case Family::P2:
    out.n = 6;
    out.g[0] = (4 * l0 - 1) * d0;
    out.g[1] = (4 * l1 - 1) * d1;
    out.g[2] = (4 * l2 - 1) * d2;
    out.g[3] = 4 * (l1 * d0 + l0 * d1);
    out.g[4] = 4 * (l2 * d1 + l1 * d2);
    out.g[5] = 4 * (l0 * d2 + l2 * d0);
    break;
  }
  return out;
}

// Scalar dof numbering over a mesh.  P1: vertex dofs.  P2: vertex dofs then
// edge dofs, edges numbered in first-encounter order while walking triangles
// ascending with local edges (0,1), (1,2), (2,0).  P0: one dof per element.
struct DofMap {
  Family family = Family::P1;
  int n_dofs = 0;
  int ndof_per_elem = 0;
  std::vector<int> elem_dofs;
  std::vector<Vec2> dof_coords;
  std::vector<bool> on_boundary;
  std::vector<int> boundary_dofs;
  int dof(int e, int a) const { return elem_dofs[e * ndof_per_elem + a]; }
};

inline DofMap build_dof_map(const EulerianMesh& m, Family f) {
  DofMap d;
  d.family = f;
  d.ndof_per_elem = n_basis(ElementType::triangle, f);
  int ne = m.n_triangles();
  d.elem_dofs.resize(static_cast<size_t>(ne) * d.ndof_per_elem);
  if (f == Family::P0) {
    d.n_dofs = ne;
    d.dof_coords.resize(ne);
    d.on_boundary.assign(ne, false);
    for (int e = 0; e < ne; ++e) {
      d.elem_dofs[e] = e;
      const auto& t = m.triangles[e];
      d.dof_coords[e] = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    }
    return d;
  }
  if (f == Family::P1 || f == Family::P1isoP2) {
    d.n_dofs = m.n_vertices();
    d.dof_coords = m.vertices;
    d.on_boundary = m.boundary_vertex;
    for (int e = 0; e < ne; ++e)
      for (int a = 0; a < 3; ++a) d.elem_dofs[e * 3 + a] = m.triangles[e][a];
  } else {
    std::map<std::pair<int, int>, int> edge_id;
    std::map<std::pair<int, int>, int> edge_count;
    int nv = m.n_vertices();
    d.dof_coords = m.vertices;
    d.on_boundary = m.boundary_vertex;
    for (int e = 0; e < ne; ++e) {
      const auto& t = m.triangles[e];
      for (int a = 0; a < 3; ++a) d.elem_dofs[e * 6 + a] = t[a];
      const int le[3][2] = {{0, 1}, {1, 2}, {2, 0}};
      for (int k = 0; k < 3; ++k) {
        int u = t[le[k][0]], v = t[le[k][1]];
        auto key = std::make_pair(std::min(u, v), std::max(u, v));
        auto it = edge_id.find(key);
        int id;
        if (it == edge_id.end()) {
          id = nv + static_cast<int>(edge_id.size());
          edge_id[key] = id;
          d.dof_coords.push_back(0.5 * (m.vertices[u] + m.vertices[v]));
          d.on_boundary.push_back(false);
        } else {
          id = it->second;
        }
        edge_count[key]++;
        d.elem_dofs[e * 6 + 3 + k] = id;
      }
    }
    d.n_dofs = nv + static_cast<int>(edge_id.size());
    for (const auto& [key, cnt] : edge_count)
      if (cnt == 1) d.on_boundary[edge_id[key]] = true;
  }
  for (int i = 0; i < d.n_dofs; ++i)
    if (d.on_boundary[i]) d.boundary_dofs.push_back(i);
  return d;
}

// Velocity/pressure pair over a common coarse mesh.  Taylor-Hood: P2
// velocity and P1 pressure on the coarse mesh itself.  P1-iso-P2/P0: P1
// velocity on the once-refined mesh (structurally identical to the 2nx x 2ny
// structured mesh) and P0 pressure on the coarse mesh.  Velocity dofs are
// scalar; vector dofs interleave as 2*i + component.
struct MixedSpaces {
  ElementPair pair = ElementPair::taylor_hood;
  // The refined velocity mesh lives on the heap so moving MixedSpaces keeps
  // vmesh valid.  coarse always points at the caller's mesh.
  std::unique_ptr<EulerianMesh> vmesh_storage;
  const EulerianMesh* coarse = nullptr;
  const EulerianMesh* vmesh = nullptr;
  Family vfam = Family::P2, pfam = Family::P1;
  DofMap vdof, pdof;
  std::vector<int> parent; // velocity-mesh element -> coarse element
  int n_vel() const { return 2 * vdof.n_dofs; }
  int n_pres() const { return pdof.n_dofs; }
};

inline MixedSpaces make_mixed_spaces(const EulerianMesh& mesh, ElementPair pair) {
  MixedSpaces s;
  s.pair = pair;
  s.coarse = &mesh;
  if (pair == ElementPair::taylor_hood) {
    s.vmesh = &mesh;
    s.vfam = Family::P2;
    s.pfam = Family::P1;
    s.vdof = build_dof_map(mesh, Family::P2);
    s.pdof = build_dof_map(mesh, Family::P1);
    s.parent.resize(mesh.n_triangles());
    for (int e = 0; e < mesh.n_triangles(); ++e) s.parent[e] = e;
  } else {
    s.vmesh_storage = std::make_unique<EulerianMesh>(build_eulerian_mesh(mesh.domain, 2 * mesh.nx, 2 * mesh.ny));
    s.vmesh = s.vmesh_storage.get();
    s.vfam = Family::P1isoP2;
    s.pfam = Family::P0;
    s.vdof = build_dof_map(*s.vmesh, Family::P1isoP2);
    s.pdof = build_dof_map(mesh, Family::P0);
    s.parent.resize(s.vmesh->n_triangles());
    for (int e = 0; e < s.vmesh->n_triangles(); ++e) {
      const auto& t = s.vmesh->triangles[e];
      Vec2 c = (s.vmesh->vertices[t[0]] + s.vmesh->vertices[t[1]] + s.vmesh->vertices[t[2]]) / 3.0;
      s.parent[e] = locate_point(mesh, c).element;
    }
  }
  return s;
}

// Physical-coordinate affine data of a triangle: jacobian [b-a, c-a], its
// inverse transpose (gradient push-forward) and area.
struct ElementGeometry {
  Vec2 a;
  Mat2 jac;
  Mat2 jac_inv_t;
  double area = 0;
  Vec2 map(const Vec2& ref) const { return a + jac * ref; }
};

inline ElementGeometry element_geometry(const EulerianMesh& m, int e) {
  const auto& t = m.triangles[e];
  ElementGeometry g;
  g.a = m.vertices[t[0]];
  Vec2 e1 = m.vertices[t[1]] - g.a, e2 = m.vertices[t[2]] - g.a;
  g.jac << e1.x(), e2.x(), e1.y(), e2.y();
  double det = g.jac.determinant();
  if (det <= 0) throw DegenerateElementError("element_geometry: non-positive jacobian");
  g.area = 0.5 * det;
  g.jac_inv_t = g.jac.inverse().transpose();
  return g;
}

// Velocity evaluated at a physical point, via location on the velocity mesh.
inline Vec2 velocity_at(const MixedSpaces& s, const VecX& u, const Vec2& x) {
  PointLocation loc = locate_point(*s.vmesh, x);
  BasisValues bv = eval_basis(ElementType::triangle, s.vfam, loc.ref());
  Vec2 val(0, 0);
  for (int a = 0; a < bv.n; ++a) {
    int i = s.vdof.dof(loc.element, a);
    val.x() += bv.v[a] * u[2 * i];
    val.y() += bv.v[a] * u[2 * i + 1];
  }
  return val;
}

inline double pressure_at(const MixedSpaces& s, const VecX& p, const Vec2& x) {
  PointLocation loc = locate_point(*s.coarse, x);
  BasisValues bv = eval_basis(ElementType::triangle, s.pfam, loc.ref());
  double val = 0;
  for (int a = 0; a < bv.n; ++a) val += bv.v[a] * p[s.pdof.dof(loc.element, a)];
  return val;
}

} // namespace ibfem
