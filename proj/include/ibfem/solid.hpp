#pragma once

#include "ibfem/common.hpp"
#include "ibfem/geometry.hpp"
#include "ibfem/linalg.hpp"

namespace ibfem {

// Material and coupling constants for one immersed structure.  kappa is the
// effective stiffness: for codim-1 structures the fiber thickness multiplies
// the input stiffness once here, and nothing downstream sees thickness again.
// Same for the excess mass density delta_rho.
struct SolidParams {
  double kappa = 1;
  double rho_s = 1;
  double thickness = 1;
  double delta_rho = 0;
  int codim = 1;
};

inline SolidParams make_solid_params(double kappa, double rho_s, double thickness, int codim, double rho_f) {
  if (codim != 0 && codim != 1) throw ConfigError("solid: codim must be 0 or 1");
  if (!(kappa >= 0)) throw ConfigError("solid: kappa must be nonnegative");
  if (!(rho_s > 0)) throw ConfigError("solid: rho_s must be positive");
  if (!(thickness > 0)) throw ConfigError("solid: thickness must be positive");
  SolidParams p;
  p.rho_s = rho_s;
  p.thickness = thickness;
  p.codim = codim;
  double scale = codim == 1 ? thickness : 1.0;
  p.kappa = kappa * scale;
  p.delta_rho = (rho_s - rho_f) * scale;
  if (p.delta_rho < 0) throw ConfigError("solid: rho_s below rho_f (negative excess density) is not supported");
  return p;
}

// P(F) = kappa F, W(F) = kappa/2 |F|^2.
struct LinearElastic {
  double kappa = 1;
};

struct SolidState {
  const LagrangianMesh* mesh = nullptr;
  VecX X, X_prev, X_prev2;
};

inline SolidState make_solid_state(const LagrangianMesh& mesh) {
  return {&mesh, mesh.X0, mesh.X0, mesh.X0};
}

inline void advance(SolidState& s, const VecX& Xnew) {
  s.X_prev2 = std::move(s.X_prev);
  s.X_prev = std::move(s.X);
  s.X = Xnew;
}

// Piecewise-constant deformation gradient of element k.  codim 1: the
// stretched tangent dX/ds in column 0, column 1 zero, so |F|^2 works
// uniformly across codimensions.
inline Mat2 deformation_gradient(const LagrangianMesh& g, const VecX& X, int k) {
  Mat2 F = Mat2::Zero();
  if (g.codim == 1) {
    const auto& seg = g.segments[k];
    F.col(0) = (node_of(X, seg[1]) - node_of(X, seg[0])) / g.seg_len[k];
  } else {
    const auto& t = g.triangles[k];
    Mat2 D;
    Vec2 e1 = node_of(X, t[1]) - node_of(X, t[0]);
    Vec2 e2 = node_of(X, t[2]) - node_of(X, t[0]);
    D << e1.x(), e2.x(), e1.y(), e2.y();
    F = D * g.tri_Sinv[k];
  }
  return F;
}

inline double elastic_energy(const LagrangianMesh& g, const VecX& X, const LinearElastic& model) {
  double E = 0;
  for (int k = 0; k < g.n_elements(); ++k)
    E += g.element_measure(k) * 0.5 * model.kappa * deformation_gradient(g, X, k).squaredNorm();
  return E;
}

namespace detail {
// Reference gradients of the three P1 functions on solid triangle k.
inline std::array<Vec2, 3> tri_ref_grads(const LagrangianMesh& g, int k) {
  Mat2 SinvT = g.tri_Sinv[k].transpose();
  Vec2 g1 = SinvT.col(0), g2 = SinvT.col(1);
  return {-g1 - g2, g1, g2};
}
} // namespace detail

// Nodal elastic force G with G_i = (P(F), grad_s chi_i), i.e. the gradient of
// the elastic energy: G = K_s X for the linear model.
inline VecX elastic_force(const LagrangianMesh& g, const VecX& X, const LinearElastic& model) {
  if (X.size() != 2 * g.n_points()) throw std::invalid_argument("elastic_force: position size mismatch");
  VecX G = VecX::Zero(X.size());
  if (g.codim == 1) {
    for (int k = 0; k < g.n_elements(); ++k) {
      const auto& seg = g.segments[k];
      Vec2 tension = model.kappa / g.seg_len[k] * (node_of(X, seg[1]) - node_of(X, seg[0]));
      G[2 * seg[0]] -= tension.x();
      G[2 * seg[0] + 1] -= tension.y();
      G[2 * seg[1]] += tension.x();
      G[2 * seg[1] + 1] += tension.y();
    }
  } else {
    for (int k = 0; k < g.n_elements(); ++k) {
      Mat2 P = model.kappa * deformation_gradient(g, X, k);
      auto grads = detail::tri_ref_grads(g, k);
      for (int a = 0; a < 3; ++a) {
        Vec2 f = g.tri_area[k] * (P * grads[a]);
        G[2 * g.triangles[k][a]] += f.x();
        G[2 * g.triangles[k][a] + 1] += f.y();
      }
    }
  }
  return G;
}

// Scalar mass and stiffness matrices of the structure space (one spatial
// component; expand_components gives the interleaved vector versions).
// K includes the model stiffness, so E(X) = 1/2 X^T K2 X.
struct SolidMatrices {
  SpMat M, K;   // scalar, n_points x n_points
  SpMat M2, K2; // interleaved vector versions
};

inline SolidMatrices assemble_solid_matrices(const LagrangianMesh& g, const LinearElastic& model) {
  int n = g.n_points();
  std::vector<Triplet> tm, tk;
  if (g.codim == 1) {
    for (int k = 0; k < g.n_elements(); ++k) {
      const auto& seg = g.segments[k];
      double l = g.seg_len[k];
      int i = seg[0], j = seg[1];
      tm.emplace_back(i, i, l / 3.0);
      tm.emplace_back(j, j, l / 3.0);
      tm.emplace_back(i, j, l / 6.0);
      tm.emplace_back(j, i, l / 6.0);
      double c = model.kappa / l;
      tk.emplace_back(i, i, c);
      tk.emplace_back(j, j, c);
      tk.emplace_back(i, j, -c);
      tk.emplace_back(j, i, -c);
    }
  } else {
    for (int k = 0; k < g.n_elements(); ++k) {
      const auto& t = g.triangles[k];
      double A = g.tri_area[k];
      auto grads = detail::tri_ref_grads(g, k);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          tm.emplace_back(t[a], t[b], A / 12.0 * (a == b ? 2.0 : 1.0));
          tk.emplace_back(t[a], t[b], model.kappa * A * grads[a].dot(grads[b]));
        }
    }
  }
  SolidMatrices out;
  out.M = SpMat(n, n);
  out.M.setFromTriplets(tm.begin(), tm.end());
  out.K = SpMat(n, n);
  out.K.setFromTriplets(tk.begin(), tk.end());
  out.M2 = expand_components(out.M);
  out.K2 = expand_components(out.K);
  return out;
}

// One inter-element (or hull) edge of a codim-0 structure with the stress
// jump [[P]] = P+ N+ + P- N- (single-sided on the hull).  Normals are outward
// unit normals of the reference elements.
struct ForceJumpTerm {
  int a, b;       // reference vertex ids of the edge
  Vec2 jump;
  double ref_len;
  bool hull;
};

inline std::vector<ForceJumpTerm> elastic_force_jumps(const LagrangianMesh& g, const VecX& X,
                                                      const LinearElastic& model) {
  if (g.codim != 0) throw UnsupportedError("elastic_force_jumps: defined for codim-0 structures only");
  std::map<std::pair<int, int>, ForceJumpTerm> terms;
  for (int k = 0; k < g.n_elements(); ++k) {
    Mat2 P = model.kappa * deformation_gradient(g, X, k);
    const auto& t = g.triangles[k];
    for (int e = 0; e < 3; ++e) {
      int u = t[e], v = t[(e + 1) % 3];
      Vec2 edge = g.ref_points[v] - g.ref_points[u];
      Vec2 normal(edge.y(), -edge.x()); // outward for CCW traversal
      double len = normal.norm();
      normal /= len;
      auto key = std::make_pair(std::min(u, v), std::max(u, v));
      auto it = terms.find(key);
      if (it == terms.end()) {
        terms[key] = {key.first, key.second, P * normal, len, true};
      } else {
        it->second.jump += P * normal;
        it->second.hull = false;
      }
    }
  }
  std::vector<ForceJumpTerm> out;
  out.reserve(terms.size());
  for (auto& [key, term] : terms) out.push_back(term);
  return out;
}

} // namespace ibfem
