#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "ibfem/common.hpp"

namespace ibfem {

struct Rect {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(const Vec2& p) const {
    return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1;
  }
};

// Structured triangulation of a rectangle: nx*ny cells, each split by the
// diagonal running lower-left to upper-right.  Both triangles are CCW.
// Triangle ids: cell (i,j) owns 2*(j*nx+i) (lower) and 2*(j*nx+i)+1 (upper).
struct EulerianMesh {
  Rect domain;
  int nx = 0, ny = 0;
  double dx = 0, dy = 0;
  double h_x = 0;   // structured cell size, max(dx, dy)
  double h_tri = 0; // max triangle diameter (longest edge)
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<bool> boundary_vertex;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  int vid(int i, int j) const { return j * (nx + 1) + i; }
};

inline EulerianMesh build_eulerian_mesh(const Rect& domain, int nx, int ny) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_eulerian_mesh: nx and ny must be >= 1");
  if (!(domain.x1 > domain.x0) || !(domain.y1 > domain.y0))
    throw std::invalid_argument("build_eulerian_mesh: degenerate domain rectangle");
  EulerianMesh m;
  m.domain = domain;
  m.nx = nx;
  m.ny = ny;
  m.dx = domain.width() / nx;
  m.dy = domain.height() / ny;
  m.h_x = std::max(m.dx, m.dy);
  m.h_tri = std::sqrt(m.dx * m.dx + m.dy * m.dy);
  m.vertices.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.emplace_back(domain.x0 + i * m.dx, domain.y0 + j * m.dy);
  m.boundary_vertex.assign(m.vertices.size(), false);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      if (i == 0 || i == nx || j == 0 || j == ny) m.boundary_vertex[m.vid(i, j)] = true;
  m.triangles.reserve(2 * nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int v00 = m.vid(i, j), v10 = m.vid(i + 1, j), v11 = m.vid(i + 1, j + 1), v01 = m.vid(i, j + 1);
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }
  return m;
}

inline std::array<double, 3> barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
  Vec2 v0 = b - a, v1 = c - a, v2 = p - a;
  double det = v0.x() * v1.y() - v0.y() * v1.x();
  if (det == 0) throw DegenerateElementError("barycentric: zero-area triangle");
  double l1 = (v2.x() * v1.y() - v2.y() * v1.x()) / det;
  double l2 = (v0.x() * v2.y() - v0.y() * v2.x()) / det;
  return {1.0 - l1 - l2, l1, l2};
}

struct PointLocation {
  int element = -1;
  std::array<double, 3> bary{};
  Vec2 ref() const { return {bary[1], bary[2]}; } // coords in x = a + [b-a, c-a] * ref
};

// Containing triangle of p: structured cell lookup, then the 3x3 cell
// neighborhood scanned in ascending global element order.  First triangle with
// min barycentric coordinate >= -tol wins; ties on shared edges therefore go
// to the lowest element index.  Negative coordinates are clamped and the
// result renormalized.
inline PointLocation locate_point(const EulerianMesh& m, const Vec2& p, double tol = 1e-12) {
  if (!m.domain.contains(p))
    throw OutOfDomainError("locate_point: point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                           ") outside the fluid domain");
  int ix = std::clamp(static_cast<int>((p.x() - m.domain.x0) / m.dx), 0, m.nx - 1);
  int iy = std::clamp(static_cast<int>((p.y() - m.domain.y0) / m.dy), 0, m.ny - 1);
  PointLocation best;
  double best_min = -1e300;
  for (int j = std::max(iy - 1, 0); j <= std::min(iy + 1, m.ny - 1); ++j)
    for (int i = std::max(ix - 1, 0); i <= std::min(ix + 1, m.nx - 1); ++i)
      for (int k = 0; k < 2; ++k) {
        int t = 2 * (j * m.nx + i) + k;
        const auto& tri = m.triangles[t];
        auto l = barycentric(m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]], p);
        double mn = std::min({l[0], l[1], l[2]});
        if (mn >= -tol) {
          double s = 0;
          for (double& v : l) {
            if (v < 0) v = 0;
            s += v;
          }
          for (double& v : l) v /= s;
          return {t, l};
        }
        if (mn > best_min) {
          best_min = mn;
          best = {t, l};
        }
      }
  // In-rectangle points always match above; keep a guarded fallback for
  // roundoff at extreme aspect ratios.
  if (best_min > -1e-9) {
    for (double& v : best.bary) v = std::max(v, 0.0);
    double s = best.bary[0] + best.bary[1] + best.bary[2];
    for (double& v : best.bary) v /= s;
    return best;
  }
  throw OutOfDomainError("locate_point: no containing triangle found");
}

// Immersed structure reference mesh.  codim 1: closed polyline over arclength
// coordinates s with per-segment reference lengths.  codim 0: triangulated
// disc with reference points relative to the disc center, per-triangle
// reference areas and inverted edge matrices.  X0 holds the initial physical
// positions, interleaved (x0, y0, x1, y1, ...).
struct LagrangianMesh {
  int codim = 1;
  bool closed = true;
  std::vector<double> s;                       // codim 1 only
  std::vector<Vec2> ref_points;                // codim 0 only
  std::vector<std::array<int, 2>> segments;    // codim 1 only
  std::vector<std::array<int, 3>> triangles;   // codim 0 only
  std::vector<double> seg_len;                 // codim 1: reference segment lengths
  std::vector<double> tri_area;                // codim 0: reference areas
  std::vector<Mat2> tri_Sinv;                  // codim 0: inverse of [Rb-Ra, Rc-Ra]
  std::vector<bool> rim_vertex;                // codim 0 only
  VecX X0;                                     // 2M initial positions
  double h_s = 0;                              // max reference element diameter
  double ref_length = 0;                       // codim 1: total reference arclength L

  int n_points() const { return codim == 1 ? static_cast<int>(s.size()) : static_cast<int>(ref_points.size()); }
  int n_elements() const {
    return codim == 1 ? static_cast<int>(segments.size()) : static_cast<int>(triangles.size());
  }
  double element_measure(int k) const { return codim == 1 ? seg_len[k] : tri_area[k]; }
};

// Closed curve over the ellipse with semi-axes (a, b): m nodes equidistributed
// in arclength, each placed exactly on the ellipse.  The reference coordinate
// is arclength, total length L = initial perimeter, so the curve starts
// unstretched.
inline LagrangianMesh build_lagrangian_curve(const Vec2& center, double a, double b, int m) {
  if (m < 3) throw std::invalid_argument("build_lagrangian_curve: need at least 3 nodes");
  if (!(a > 0) || !(b > 0)) throw std::invalid_argument("build_lagrangian_curve: semi-axes must be positive");
  const int N = 1 << 14;
  std::vector<double> cum(N + 1, 0.0);
  Vec2 prev(a, 0);
  for (int k = 1; k <= N; ++k) {
    double th = 2.0 * M_PI * k / N;
    Vec2 q(a * std::cos(th), b * std::sin(th));
    cum[k] = cum[k - 1] + (q - prev).norm();
    prev = q;
  }
  double L = cum[N];
  LagrangianMesh g;
  g.codim = 1;
  g.closed = true;
  g.ref_length = L;
  g.h_s = L / m;
  g.s.resize(m);
  g.X0.resize(2 * m);
  for (int i = 0; i < m; ++i) {
    double si = L * i / m;
    g.s[i] = si;
    auto it = std::upper_bound(cum.begin(), cum.end(), si);
    int k = std::min(static_cast<int>(it - cum.begin()) - 1, N - 1);
    double frac = (si - cum[k]) / (cum[k + 1] - cum[k]);
    double th = 2.0 * M_PI * (k + frac) / N;
    g.X0[2 * i] = center.x() + a * std::cos(th);
    g.X0[2 * i + 1] = center.y() + b * std::sin(th);
  }
  g.segments.resize(m);
  g.seg_len.assign(m, L / m);
  for (int i = 0; i < m; ++i) g.segments[i] = {i, (i + 1) % m};
  return g;
}

// Triangulated disc of reference radius r = sqrt(a*b), initially embedded as
// the ellipse with semi-axes (a, b) via the area-preserving diagonal stretch
// diag(a/r, b/r).  Level 0 is a 12-triangle fan; each refinement quarters
// every triangle and projects new hull-edge midpoints back to radius r.
inline LagrangianMesh build_lagrangian_disc(const Vec2& center, double a, double b, int refinement) {
  if (!(a > 0) || !(b > 0)) throw std::invalid_argument("build_lagrangian_disc: semi-axes must be positive");
  if (refinement < 0 || refinement > 10)
    throw std::invalid_argument("build_lagrangian_disc: refinement must be in [0, 10]");
  double r = std::sqrt(a * b);
  std::vector<Vec2> pts;
  std::vector<bool> rim;
  std::vector<std::array<int, 3>> tris;
  pts.emplace_back(0, 0);
  rim.push_back(false);
  const int n0 = 12;
  for (int k = 0; k < n0; ++k) {
    double th = 2.0 * M_PI * k / n0;
    pts.emplace_back(r * std::cos(th), r * std::sin(th));
    rim.push_back(true);
  }
  for (int k = 0; k < n0; ++k) tris.push_back({0, 1 + k, 1 + (k + 1) % n0});

  for (int level = 0; level < refinement; ++level) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) {
        int u = t[e], v = t[(e + 1) % 3];
        edge_count[{std::min(u, v), std::max(u, v)}]++;
      }
    std::map<std::pair<int, int>, int> midpoint;
    auto mid_of = [&](int u, int v) {
      auto key = std::make_pair(std::min(u, v), std::max(u, v));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec2 p = 0.5 * (pts[u] + pts[v]);
      bool hull = edge_count[key] == 1;
      if (hull) p *= r / p.norm();
      int id = static_cast<int>(pts.size());
      pts.push_back(p);
      rim.push_back(hull);
      midpoint[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(4 * tris.size());
    for (const auto& t : tris) {
      int ab = mid_of(t[0], t[1]), bc = mid_of(t[1], t[2]), ca = mid_of(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({ab, t[1], bc});
      next.push_back({ca, bc, t[2]});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  LagrangianMesh g;
  g.codim = 0;
  g.closed = true;
  g.ref_points = std::move(pts);
  g.triangles = std::move(tris);
  g.rim_vertex = std::move(rim);
  int M = g.n_points();
  g.X0.resize(2 * M);
  for (int i = 0; i < M; ++i) {
    g.X0[2 * i] = center.x() + (a / r) * g.ref_points[i].x();
    g.X0[2 * i + 1] = center.y() + (b / r) * g.ref_points[i].y();
  }
  g.tri_area.resize(g.n_elements());
  g.tri_Sinv.resize(g.n_elements());
  for (int k = 0; k < g.n_elements(); ++k) {
    const auto& t = g.triangles[k];
    Vec2 e1 = g.ref_points[t[1]] - g.ref_points[t[0]];
    Vec2 e2 = g.ref_points[t[2]] - g.ref_points[t[0]];
    double det = e1.x() * e2.y() - e1.y() * e2.x();
    if (det <= 0) throw DegenerateElementError("build_lagrangian_disc: non-positive triangle orientation");
    g.tri_area[k] = 0.5 * det;
    Mat2 S;
    S << e1.x(), e2.x(), e1.y(), e2.y();
    g.tri_Sinv[k] = S.inverse();
    for (int e = 0; e < 3; ++e) {
      double len = (g.ref_points[t[(e + 1) % 3]] - g.ref_points[t[e]]).norm();
      g.h_s = std::max(g.h_s, len);
    }
  }
  return g;
}

inline Vec2 node_of(const VecX& X, int i) { return {X[2 * i], X[2 * i + 1]}; }

// Max current edge length over the structure mesh.
inline double max_segment_length(const LagrangianMesh& g, const VecX& X) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("max_segment_length: position size mismatch");
  double L = 0;
  if (g.codim == 1) {
    for (const auto& seg : g.segments) L = std::max(L, (node_of(X, seg[1]) - node_of(X, seg[0])).norm());
  } else {
    for (const auto& t : g.triangles)
      for (int e = 0; e < 3; ++e)
        L = std::max(L, (node_of(X, t[(e + 1) % 3]) - node_of(X, t[e])).norm());
  }
  return L;
}

namespace detail {
// Sample positions used by overlap_count: 4-point Gauss on segments, the
// 7-point degree-5 rule on triangles.  Positions only, no weights.
inline const std::array<double, 4>& seg_sample_points() {
  static const std::array<double, 4> p = {0.069431844202973712, 0.33000947820757187, 0.66999052179242813,
                                          0.93056815579702623};
  return p;
}
inline const std::array<Vec2, 7>& tri_sample_points() {
  static const std::array<Vec2, 7> p = {
      Vec2(1.0 / 3.0, 1.0 / 3.0),
      Vec2(0.470142064105115, 0.470142064105115),
      Vec2(0.059715871789770, 0.470142064105115),
      Vec2(0.470142064105115, 0.059715871789770),
      Vec2(0.101286507323456, 0.101286507323456),
      Vec2(0.797426985353087, 0.101286507323456),
      Vec2(0.101286507323456, 0.797426985353087)};
  return p;
}
} // namespace detail

// Per-fluid-element tally of distinct structure elements with at least one
// quadrature point inside; accumulates into `count` so several structures can
// share one tally.
inline void overlap_tally(const LagrangianMesh& g, const VecX& X, const EulerianMesh& m,
                          std::vector<int>& count) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("overlap_tally: position size mismatch");
  count.resize(m.n_triangles(), 0);
  std::vector<int> last_seen(m.n_triangles(), -1);
  auto tally = [&](int solid_elem, const Vec2& x) {
    int e = locate_point(m, x).element;
    if (last_seen[e] != solid_elem) {
      last_seen[e] = solid_elem;
      count[e]++;
    }
  };
  if (g.codim == 1) {
    for (int k = 0; k < g.n_elements(); ++k) {
      Vec2 xa = node_of(X, g.segments[k][0]), xb = node_of(X, g.segments[k][1]);
      for (double t : detail::seg_sample_points()) tally(k, xa + t * (xb - xa));
    }
  } else {
    for (int k = 0; k < g.n_elements(); ++k) {
      const auto& t = g.triangles[k];
      Vec2 xa = node_of(X, t[0]), xb = node_of(X, t[1]), xc = node_of(X, t[2]);
      for (const Vec2& q : detail::tri_sample_points()) tally(k, xa + q.x() * (xb - xa) + q.y() * (xc - xa));
    }
  }
}

// Mesh intersection count C_e: max over fluid elements of the number of
// distinct structure elements with at least one quadrature point inside.
inline int overlap_count(const LagrangianMesh& g, const VecX& X, const EulerianMesh& m) {
  std::vector<int> count;
  overlap_tally(g, X, m, count);
  return count.empty() ? 0 : *std::max_element(count.begin(), count.end());
}

// Area enclosed by the structure in current coordinates: shoelace formula for
// closed curves, sum of signed triangle areas for discs.
inline double structure_area(const LagrangianMesh& g, const VecX& X) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("structure_area: position size mismatch");
  double A = 0;
  if (g.codim == 1) {
    if (!g.closed) throw UnsupportedError("structure_area: open curves have no enclosed area");
    int M = g.n_points();
    for (int i = 0; i < M; ++i) {
      Vec2 p = node_of(X, i), q = node_of(X, (i + 1) % M);
      A += 0.5 * (p.x() * q.y() - q.x() * p.y());
    }
  } else {
    for (const auto& t : g.triangles) {
      Vec2 p = node_of(X, t[0]), q = node_of(X, t[1]), w = node_of(X, t[2]);
      A += 0.5 * ((q - p).x() * (w - p).y() - (q - p).y() * (w - p).x());
    }
  }
  return A;
}

} // namespace ibfem
