#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ibfem/common.hpp"
#include "ibfem/fem.hpp"
#include "ibfem/fluid.hpp"
#include "ibfem/linalg.hpp"
#include "ibfem/solid.hpp"

namespace ibfem {

// Quadrature on structure elements used by every fluid-structure integral.
// Segments use exactly that many Gauss points; triangles use the smallest
// available rule with at least that many points.
struct CouplingConfig {
  int quad_points_segment = 4;
  int quad_points_triangle = 7;
};

inline void validate(const CouplingConfig& c) {
  if (c.quad_points_segment < 1 || c.quad_points_triangle < 1)
    throw ConfigError("coupling: quadrature point counts must be positive");
}

namespace detail {

// Visits every structure quadrature point: body(element, total weight,
// current position, solid basis values, n_solid_basis, local node ids).
template <typename Body>
inline void for_each_solid_qp(const LagrangianMesh& g, const VecX& X, const CouplingConfig& cc, Body&& body) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("coupling: position size mismatch");
  if (g.codim == 1) {
    QuadratureRule q = segment_rule_n_points(cc.quad_points_segment);
    for (int k = 0; k < g.n_elements(); ++k) {
      const auto& seg = g.segments[k];
      Vec2 xa = node_of(X, seg[0]), xb = node_of(X, seg[1]);
      for (int i = 0; i < q.size(); ++i) {
        double t = q.points[i].x();
        std::array<double, 3> chi = {1.0 - t, t, 0.0};
        std::array<int, 3> nodes = {seg[0], seg[1], -1};
        body(k, q.weights[i] * g.seg_len[k], xa + t * (xb - xa), chi, 2, nodes);
      }
    }
  } else {
    QuadratureRule q = triangle_rule_min_points(cc.quad_points_triangle);
    for (int k = 0; k < g.n_elements(); ++k) {
      const auto& t = g.triangles[k];
      Vec2 xa = node_of(X, t[0]), xb = node_of(X, t[1]), xc = node_of(X, t[2]);
      for (int i = 0; i < q.size(); ++i) {
        double xi = q.points[i].x(), eta = q.points[i].y();
        std::array<double, 3> chi = {1.0 - xi - eta, xi, eta};
        std::array<int, 3> nodes = {t[0], t[1], t[2]};
        body(k, q.weights[i] * 2.0 * g.tri_area[k], xa + xi * (xb - xa) + eta * (xc - xa), chi, 3, nodes);
      }
    }
  }
}

// Parameters in (0,1) where the segment from a to b crosses a line of the
// structured velocity mesh (vertical, horizontal, or cell diagonal), sorted.
// Between consecutive crossings the fluid basis restricted to the segment is
// a single polynomial.
inline std::vector<double> grid_crossings(const EulerianMesh& vm, const Vec2& a, const Vec2& b) {
  std::vector<double> ts;
  auto family = [&ts](double ga, double gb) {
    if (ga == gb) return;
    double lo = std::min(ga, gb), hi = std::max(ga, gb);
    for (int k = int(std::ceil(lo)); k <= int(std::floor(hi)); ++k) {
      double t = (k - ga) / (gb - ga);
      if (t > 1e-12 && t < 1.0 - 1e-12) ts.push_back(t);
    }
  };
  family((a.x() - vm.domain.x0) / vm.dx, (b.x() - vm.domain.x0) / vm.dx);
  family((a.y() - vm.domain.y0) / vm.dy, (b.y() - vm.domain.y0) / vm.dy);
  family((a.x() - vm.domain.x0) / vm.dx - (a.y() - vm.domain.y0) / vm.dy,
         (b.x() - vm.domain.x0) / vm.dx - (b.y() - vm.domain.y0) / vm.dy);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end(), [](double p, double q) { return q - p < 1e-12; }), ts.end());
  return ts;
}

} // namespace detail

// Interaction matrix L[l, j] = integral of chi_l(s) phi_j(X(s)) ds over the
// structure, scalar dofs on both sides.  This is the constraint operator
// acting on fluid velocities; the structure-side operator with the same inner
// product is the solid mass matrix.
inline SpMat assemble_interaction(const MixedSpaces& s, const LagrangianMesh& g, const VecX& X,
                                  const CouplingConfig& cc) {
  std::vector<Triplet> trips;
  detail::for_each_solid_qp(g, X, cc, [&](int, double w, const Vec2& x, const std::array<double, 3>& chi,
                                          int nchi, const std::array<int, 3>& nodes) {
    PointLocation loc = locate_point(*s.vmesh, x);
    BasisValues bv = eval_basis(ElementType::triangle, s.vfam, loc.ref());
    for (int l = 0; l < nchi; ++l)
      for (int a = 0; a < bv.n; ++a) {
        double v = w * chi[l] * bv.v[a];
        if (v != 0) trips.emplace_back(nodes[l], s.vdof.dof(loc.element, a), v);
      }
  });
  SpMat L(g.n_points(), s.vdof.n_dofs);
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

// Elastic load on the fluid space: b[(i,c)] = <F, phi_i e_c> with
// <F, v> = -(P(F), grad_s[v(X(s))]).  P and F are constant per structure
// element; grad_s(phi(X) e_c) contracts to grad_x(phi) . (F P_row_c).
// For curves the segments are split where they cross velocity-mesh lines, so
// the pairing is integrated exactly and the discrete force matches the
// elastic-energy gradient along nodal motions.  cc.quad_points_* still
// control the codim-0 rule.
inline VecX spread_elastic_force(const MixedSpaces& s, const LagrangianMesh& g, const VecX& X,
                                 const LinearElastic& model, const CouplingConfig& cc) {
  VecX b = VecX::Zero(s.n_vel());
  std::vector<Mat2> FP(g.n_elements());
  for (int k = 0; k < g.n_elements(); ++k) {
    Mat2 F = deformation_gradient(g, X, k);
    FP[k] = F * (model.kappa * F).transpose(); // F P^T
  }
  auto accumulate = [&](int k, double w, const Vec2& x) {
    PointLocation loc = locate_point(*s.vmesh, x);
    ElementGeometry geom = element_geometry(*s.vmesh, loc.element);
    BasisGrads bg = eval_basis_grad(ElementType::triangle, s.vfam, loc.ref());
    for (int a = 0; a < bg.n; ++a) {
      Vec2 grad = geom.jac_inv_t * bg.g[a];
      int i = s.vdof.dof(loc.element, a);
      for (int c = 0; c < 2; ++c) b[2 * i + c] -= w * grad.dot(FP[k].col(c));
    }
  };
  if (g.codim == 1) {
    if (X.size() != 2 * g.n_points()) throw std::invalid_argument("coupling: position size mismatch");
    const double gauss2[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    for (int k = 0; k < g.n_elements(); ++k) {
      Vec2 xa = node_of(X, g.segments[k][0]), xb = node_of(X, g.segments[k][1]);
      std::vector<double> ts = detail::grid_crossings(*s.vmesh, xa, xb);
      ts.push_back(1.0);
      double t0 = 0;
      for (double t1 : ts) {
        for (double q : gauss2)
          accumulate(k, 0.5 * (t1 - t0) * g.seg_len[k], xa + (t0 + (t1 - t0) * q) * (xb - xa));
        t0 = t1;
      }
    }
  } else {
    detail::for_each_solid_qp(g, X, cc,
                              [&](int k, double w, const Vec2& x, const std::array<double, 3>&, int,
                                  const std::array<int, 3>&) { accumulate(k, w, x); });
  }
  return b;
}

// Same load, assembled from the stress jump decomposition over reference
// edges: <F, v> = -sum_edges integral of [[P]] . v(X(s)).  Codim 0 only.
inline VecX spread_force_jump_form(const MixedSpaces& s, const LagrangianMesh& g, const VecX& X,
                                   const LinearElastic& model, const CouplingConfig& cc) {
  auto jumps = elastic_force_jumps(g, X, model);
  QuadratureRule q = segment_rule_n_points(cc.quad_points_segment);
  VecX b = VecX::Zero(s.n_vel());
  for (const auto& term : jumps) {
    Vec2 xa = node_of(X, term.a), xb = node_of(X, term.b);
    for (int i = 0; i < q.size(); ++i) {
      double t = q.points[i].x(), w = q.weights[i] * term.ref_len;
      PointLocation loc = locate_point(*s.vmesh, xa + t * (xb - xa));
      BasisValues bv = eval_basis(ElementType::triangle, s.vfam, loc.ref());
      for (int a = 0; a < bv.n; ++a) {
        int j = s.vdof.dof(loc.element, a);
        for (int c = 0; c < 2; ++c) b[2 * j + c] -= w * bv.v[a] * term.jump[c];
      }
    }
  }
  return b;
}

// Nodal velocity interpolation u(X_i) for the pointwise structure update.
inline VecX interpolate_velocity(const MixedSpaces& s, const VecX& u, const LagrangianMesh& g, const VecX& X) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("interpolate_velocity: position size mismatch");
  VecX V(X.size());
  for (int i = 0; i < g.n_points(); ++i) {
    Vec2 v = velocity_at(s, u, node_of(X, i));
    V[2 * i] = v.x();
    V[2 * i + 1] = v.y();
  }
  return V;
}

namespace detail {

// Scalar interpolation matrix: row i holds the fluid velocity basis evaluated
// at structure node i, so J u gives the nodal samples u(X_i) per component.
inline SpMat interpolation_matrix(const MixedSpaces& s, const LagrangianMesh& g, const VecX& X) {
  std::vector<Triplet> trips;
  for (int i = 0; i < g.n_points(); ++i) {
    PointLocation loc = locate_point(*s.vmesh, node_of(X, i));
    BasisValues bv = eval_basis(ElementType::triangle, s.vfam, loc.ref());
    for (int a = 0; a < bv.n; ++a)
      if (bv.v[a] != 0) trips.emplace_back(i, s.vdof.dof(loc.element, a), bv.v[a]);
  }
  SpMat J(g.n_points(), s.vdof.n_dofs);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

} // namespace detail

// Excess-mass operator delta_rho * integral of u(X(s)) . v(X(s)) ds with both
// compositions represented in the structure space, S = delta_rho J^T M_s J.
// Representing u(X) the same way as the position update does makes the
// transported-inertia pairing telescope exactly in the discrete energy
// balance; a plain quadrature form leaves an O(h^2) defect that does not
// vanish with the time step.  The caller scales by 1/dt.
inline SpMat assemble_excess_inertia(const MixedSpaces& s, const LagrangianMesh& g, const VecX& X,
                                     double delta_rho, const CouplingConfig&) {
  SpMat J = detail::interpolation_matrix(s, g, X);
  SpMat Ms = assemble_solid_matrices(g, LinearElastic{0}).M;
  return expand_components(SpMat(SpMat(J.transpose() * Ms) * J) * delta_rho);
}

// Excess-mass load delta_rho * integral of u_old(X_prev(s)) . v(X(s)) ds: the
// transported previous velocity, sampled at the previous node positions and
// represented in the structure space, tested against the current embedding.
inline VecX excess_inertia_rhs(const MixedSpaces& s, const LagrangianMesh& g, const VecX& X, const VecX& X_prev,
                               const VecX& u_old, double delta_rho, const CouplingConfig&) {
  if (X_prev.size() != X.size()) throw std::invalid_argument("excess_inertia_rhs: position size mismatch");
  if (delta_rho == 0) return VecX::Zero(s.n_vel());
  VecX W = interpolate_velocity(s, u_old, g, X_prev);
  SpMat M2 = assemble_solid_matrices(g, LinearElastic{0}).M2;
  SpMat J2 = expand_components(detail::interpolation_matrix(s, g, X));
  return delta_rho * VecX(J2.transpose() * VecX(M2 * W));
}

} // namespace ibfem
