#pragma once

#include "ibfem/common.hpp"
#include "ibfem/fem.hpp"
#include "ibfem/linalg.hpp"

namespace ibfem {

struct FluidParams {
  double rho_f = 1.0;
  double nu = 1.0;
};

inline void validate(const FluidParams& p) {
  if (!(p.rho_f > 0)) throw std::invalid_argument("FluidParams: rho_f must be positive");
  if (!(p.nu > 0)) throw std::invalid_argument("FluidParams: nu must be positive");
}

namespace detail {

template <typename Body>
inline void for_each_velocity_qp(const MixedSpaces& s, int degree, Body&& body) {
  QuadratureRule q = quadrature_rule(ElementType::triangle, degree);
  const EulerianMesh& vm = *s.vmesh;
  for (int e = 0; e < vm.n_triangles(); ++e) {
    ElementGeometry g = element_geometry(vm, e);
    double jac2 = 2.0 * g.area; // reference weights already carry the 1/2
    for (int k = 0; k < q.size(); ++k) {
      BasisValues bv = eval_basis(ElementType::triangle, s.vfam, q.points[k]);
      BasisGrads bg = eval_basis_grad(ElementType::triangle, s.vfam, q.points[k]);
      std::array<Vec2, 6> grad{};
      for (int a = 0; a < bg.n; ++a) grad[a] = g.jac_inv_t * bg.g[a];
      body(e, g, q.points[k], q.weights[k] * jac2, bv, grad);
    }
  }
}

} // namespace detail

// Velocity mass matrix (no density factor), interleaved vector dofs.
inline SpMat assemble_velocity_mass(const MixedSpaces& s) {
  int degree = s.vfam == Family::P2 ? 4 : 2;
  std::vector<Triplet> t;
  detail::for_each_velocity_qp(s, degree, [&](int e, const ElementGeometry&, const Vec2&, double w,
                                              const BasisValues& bv, const std::array<Vec2, 6>&) {
    for (int a = 0; a < bv.n; ++a)
      for (int b = 0; b < bv.n; ++b) {
        double v = w * bv.v[a] * bv.v[b];
        int i = s.vdof.dof(e, a), j = s.vdof.dof(e, b);
        t.emplace_back(2 * i, 2 * j, v);
        t.emplace_back(2 * i + 1, 2 * j + 1, v);
      }
  });
  SpMat M(s.n_vel(), s.n_vel());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Viscous form nu * (grad u + grad u^T) : (grad v + grad v^T), assembled
// without the conventional half factor: entry
// nu * (2 delta_ab grad(phi_i).grad(phi_j) + 2 d_b(phi_i) d_a(phi_j)).
inline SpMat assemble_viscous(const MixedSpaces& s, double nu) {
  if (!(nu > 0)) throw std::invalid_argument("assemble_viscous: nu must be positive");
  std::vector<Triplet> t;
  detail::for_each_velocity_qp(s, 2, [&](int e, const ElementGeometry&, const Vec2&, double w, const BasisValues&,
                                         const std::array<Vec2, 6>& grad) {
    int n = n_basis(ElementType::triangle, s.vfam);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        int i = s.vdof.dof(e, a), j = s.vdof.dof(e, b);
        double dot = grad[a].dot(grad[b]);
        for (int ca = 0; ca < 2; ++ca)
          for (int cb = 0; cb < 2; ++cb) {
            double v = nu * w * (2.0 * (ca == cb ? dot : 0.0) + 2.0 * grad[a][cb] * grad[b][ca]);
            if (v != 0) t.emplace_back(2 * i + ca, 2 * j + cb, v);
          }
      }
  });
  SpMat K(s.n_vel(), s.n_vel());
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

// Divergence constraint rows: B[k, 2j+c] = -(d_c phi_j, psi_k).  Pressure
// basis functions are evaluated on the parent coarse element.
inline SpMat assemble_divergence(const MixedSpaces& s) {
  std::vector<Triplet> t;
  int pe_cached = -1;
  ElementGeometry pgeom;
  Mat2 pinv;
  detail::for_each_velocity_qp(s, 2, [&](int e, const ElementGeometry& g, const Vec2& ref, double w,
                                         const BasisValues&, const std::array<Vec2, 6>& grad) {
    int pe = s.parent[e];
    if (pe != pe_cached) {
      pgeom = element_geometry(*s.coarse, pe);
      pinv = pgeom.jac.inverse();
      pe_cached = pe;
    }
    Vec2 x = g.map(ref);
    BasisValues pv = eval_basis(ElementType::triangle, s.pfam, pinv * (x - pgeom.a));
    int n = n_basis(ElementType::triangle, s.vfam);
    for (int k = 0; k < pv.n; ++k) {
      int row = s.pdof.dof(pe, k);
      for (int b = 0; b < n; ++b) {
        int j = s.vdof.dof(e, b);
        for (int c = 0; c < 2; ++c) {
          double v = -w * pv.v[k] * grad[b][c];
          if (v != 0) t.emplace_back(row, 2 * j + c, v);
        }
      }
    }
  });
  SpMat B(s.n_pres(), s.n_vel());
  B.setFromTriplets(t.begin(), t.end());
  return B;
}

// Integrals of the pressure basis functions, used for the zero-mean
// constraint row.
inline VecX assemble_pressure_mean(const MixedSpaces& s) {
  VecX m = VecX::Zero(s.n_pres());
  QuadratureRule q = quadrature_rule(ElementType::triangle, 2);
  for (int e = 0; e < s.coarse->n_triangles(); ++e) {
    ElementGeometry g = element_geometry(*s.coarse, e);
    for (int k = 0; k < q.size(); ++k) {
      BasisValues pv = eval_basis(ElementType::triangle, s.pfam, q.points[k]);
      for (int a = 0; a < pv.n; ++a) m[s.pdof.dof(e, a)] += q.weights[k] * 2.0 * g.area * pv.v[a];
    }
  }
  return m;
}

// Skew-symmetric convection at transport field w (coefficients on the
// velocity space, no density factor):
//   N[(i,a),(j,b)] = delta_ab * 1/2 * ((w.grad phi_j, phi_i) - (w.grad phi_i, phi_j)).
// Each quadrature contribution to (i,j) is the exact negation of the one to
// (j,i), so N^T = -N holds to rounding regardless of quadrature accuracy and
// (N u, u) vanishes at the algebra level.
inline SpMat assemble_convection(const MixedSpaces& s, const VecX& w) {
  if (w.size() != s.n_vel()) throw std::invalid_argument("assemble_convection: transport field size mismatch");
  int degree = s.vfam == Family::P2 ? 5 : 2;
  std::vector<Triplet> t;
  detail::for_each_velocity_qp(s, degree, [&](int e, const ElementGeometry&, const Vec2&, double wq,
                                              const BasisValues& bv, const std::array<Vec2, 6>& grad) {
    Vec2 wval(0, 0);
    for (int a = 0; a < bv.n; ++a) {
      int i = s.vdof.dof(e, a);
      wval.x() += bv.v[a] * w[2 * i];
      wval.y() += bv.v[a] * w[2 * i + 1];
    }
    for (int a = 0; a < bv.n; ++a)
      for (int b = 0; b < bv.n; ++b) {
        int i = s.vdof.dof(e, a), j = s.vdof.dof(e, b);
        double v = 0.5 * wq * (wval.dot(grad[b]) * bv.v[a] - wval.dot(grad[a]) * bv.v[b]);
        if (v != 0) {
          t.emplace_back(2 * i, 2 * j, v);
          t.emplace_back(2 * i + 1, 2 * j + 1, v);
        }
      }
  });
  SpMat N(s.n_vel(), s.n_vel());
  N.setFromTriplets(t.begin(), t.end());
  return N;
}

struct FluidMatrices {
  SpMat M;    // velocity mass
  SpMat K;    // viscous form, includes nu
  SpMat B;    // divergence constraint rows
  VecX mean;  // pressure basis integrals
};

inline FluidMatrices assemble_fluid_matrices(const MixedSpaces& s, const FluidParams& p) {
  validate(p);
  return {assemble_velocity_mass(s), assemble_viscous(s, p.nu), assemble_divergence(s),
          assemble_pressure_mean(s)};
}

struct FluidState {
  VecX u; // 2 * n scalar velocity dofs, interleaved
  VecX p;
  double t = 0;
};

inline FluidState make_fluid_state(const MixedSpaces& s) {
  return {VecX::Zero(s.n_vel()), VecX::Zero(s.n_pres()), 0.0};
}

// Installs the incompressibility blocks of a saddle system: B^T in the
// velocity rows, B in the pressure rows at r_p, and the symmetric pair that
// couples the zero-mean multiplier at index r_xi.
inline void add_pressure_blocks(SystemBuilder& sb, const FluidMatrices& fm, int r_p, int r_xi) {
  sb.add_matrix(0, r_p, SpMat(fm.B.transpose()));
  sb.add_matrix(r_p, 0, fm.B);
  for (int k = 0; k < fm.mean.size(); ++k) {
    sb.add(r_p + k, r_xi, fm.mean[k]);
    sb.add(r_xi, r_p + k, fm.mean[k]);
  }
}

// L2 projection of a velocity field onto the discretely divergence-free
// subspace with zero boundary values.  Used to prepare initial conditions.
inline VecX project_divergence_free(const MixedSpaces& s, const FluidMatrices& fm, const VecX& u_raw,
                                    double tol = 1e-9) {
  if (u_raw.size() != s.n_vel()) throw std::invalid_argument("project_divergence_free: size mismatch");
  int nv = s.n_vel(), np = s.n_pres();
  SystemBuilder sb(nv + np + 1);
  for (int d : s.vdof.boundary_dofs) {
    sb.fix(2 * d);
    sb.fix(2 * d + 1);
  }
  sb.add_matrix(0, 0, fm.M);
  add_pressure_blocks(sb, fm, nv, nv + np);
  sb.add_vector(0, fm.M * u_raw);
  return solve_sparse(sb.matrix(), sb.rhs(), tol).x.head(nv);
}

} // namespace ibfem
