#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "ibfem/common.hpp"
#include "ibfem/coupling.hpp"
#include "ibfem/fluid.hpp"
#include "ibfem/solid.hpp"

namespace ibfem {

enum class Scheme { feibm, dlm };

// How the missing previous structure position is chosen at the first step.
// zero_solid_velocity copies the initial embedding (structure starts at rest);
// zero_previous_position places the fictitious previous position at the origin.
enum class Startup { zero_solid_velocity, zero_previous_position };

struct SchemeConfig {
  Scheme scheme = Scheme::dlm;
  double dt = 0.1;
  int n_steps = 1;
  double linear_solver_tolerance = 1e-9;
  Startup startup = Startup::zero_solid_velocity;
};

inline void validate(const SchemeConfig& c) {
  if (!(c.dt > 0)) throw ConfigError("scheme: dt must be positive");
  if (c.n_steps < 1) throw ConfigError("scheme: n_steps must be at least 1");
  if (!(c.linear_solver_tolerance > 0)) throw ConfigError("scheme: linear_solver_tolerance must be positive");
}

// Time-step restriction L^n * dt <= C * rhs_scale with rhs_scale h_x * h_s for
// a 1d structure in a 2d fluid and h_x for a 2d structure.  C is a constant
// this code cannot evaluate, so the verdict reports both sides and whether the
// bound holds at C = 1.
struct CflVerdict {
  double lhs = 0;
  double rhs_scale = 0;
  bool satisfied_at_c1 = true;
};

inline CflVerdict cfl_check(double L_n, double dt, double h_x, double h_s, int fluid_dim, int solid_dim) {
  if (fluid_dim != 2 || (solid_dim != 1 && solid_dim != 2))
    throw UnsupportedError("cfl_check: only (fluid_dim, solid_dim) = (2,1) or (2,2) are supported");
  CflVerdict v;
  v.lhs = L_n * dt;
  v.rhs_scale = solid_dim == 1 ? h_x * h_s : h_x;
  v.satisfied_at_c1 = v.lhs <= v.rhs_scale;
  return v;
}

// Diagnostics of one completed step.  Energies are evaluated on the updated
// state; the structure velocity is the backward difference (X - X_prev) / dt.
// constraint_residual and solver_residual are NaN where not applicable.
struct StepReport {
  int step = 0;
  double time = 0;
  double kinetic_fluid = 0;
  double kinetic_solid = 0;
  double elastic = 0;
  double viscous_dissipation = 0; // u . K u at the current velocity
  double energy_ratio = 1;
  double area = 0;
  double div_residual = 0;
  double pressure_mean = 0; // integral of the pressure over the domain
  double conv_skew_rel = 0; // |u.N(w)u| relative to |N(w)u||u|, new velocity
  double constraint_residual = std::numeric_limits<double>::quiet_NaN();
  double solver_residual = std::numeric_limits<double>::quiet_NaN();
  double L_n = 0;
  double cfl_lhs = 0;
  double cfl_rhs_scale = 0;
  bool cfl_satisfied_at_c1 = true;
  int C_e_n = 0;
  double total() const { return kinetic_fluid + kinetic_solid + elastic; }
};

// One fluid-structure configuration advanced in time by either scheme.  Owns
// its meshes behind stable addresses; movable, not copyable.  All structures
// share one set of solid parameters.
class Simulation {
public:
  Simulation(EulerianMesh mesh, ElementPair pair, std::vector<LagrangianMesh> structures,
             const FluidParams& fluid_params, const SolidParams& solid_params, const SchemeConfig& scheme,
             const CouplingConfig& coupling = {})
      : mesh_(std::make_unique<EulerianMesh>(std::move(mesh))), fp_(fluid_params), sp_(solid_params),
        sc_(scheme), cc_(coupling), model_{solid_params.kappa} {
    validate(fp_);
    validate(sc_);
    validate(cc_);
    if (structures.empty()) throw ConfigError("simulation: at least one structure required");
    spaces_ = make_mixed_spaces(*mesh_, pair);
    fm_ = assemble_fluid_matrices(spaces_, fp_);
    for (auto& g : structures) {
      if (g.codim != sp_.codim) throw ConfigError("simulation: structure codim does not match solid parameters");
      smesh_.push_back(std::make_unique<LagrangianMesh>(std::move(g)));
    }
    for (const auto& g : smesh_) {
      sm_.push_back(assemble_solid_matrices(*g, model_));
      solids.push_back(make_solid_state(*g));
      multipliers.push_back(VecX::Zero(2 * g->n_points()));
    }
    if (sc_.startup == Startup::zero_previous_position)
      for (auto& s : solids) s.X_prev = VecX::Zero(s.X.size());
    fluid = make_fluid_state(spaces_);
  }

  const EulerianMesh& mesh() const { return *mesh_; }
  const MixedSpaces& spaces() const { return spaces_; }
  const FluidMatrices& fluid_matrices() const { return fm_; }
  const std::vector<SolidMatrices>& solid_matrices() const { return sm_; }
  const LagrangianMesh& structure(int i) const { return *smesh_[i]; }
  int n_structures() const { return int(smesh_.size()); }
  const FluidParams& fluid_params() const { return fp_; }
  const SolidParams& solid_params() const { return sp_; }
  const SchemeConfig& scheme() const { return sc_; }
  const CouplingConfig& coupling() const { return cc_; }
  int step_index() const { return step_; }

  // Replaces the fluid velocity before the run starts.  Boundary values are
  // forced to zero to stay consistent with the no-slip system.
  void set_velocity(const VecX& u) {
    if (step_ != 0) throw Error("simulation: set_velocity is only valid before the first step");
    if (u.size() != spaces_.n_vel()) throw std::invalid_argument("simulation: velocity size mismatch");
    fluid.u = u;
    for (int d : spaces_.vdof.boundary_dofs) {
      fluid.u[2 * d] = 0;
      fluid.u[2 * d + 1] = 0;
    }
    total0_ = -1;
  }

  // Diagnostics of the initial state; also fixes the energy-ratio reference.
  StepReport initial_report() {
    return make_report(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
  }

  StepReport step() {
    int computing = step_ + 1;
    try {
      if (total0_ < 0) initial_report();
      return sc_.scheme == Scheme::dlm ? dlm_step() : feibm_step();
    } catch (const OutOfDomainError&) {
      // The domain is convex, so an escape during quadrature or interpolation
      // means some structure node lies outside.
      for (int i = 0; i < n_structures(); ++i)
        for (int k = 0; k < smesh_[i]->n_points(); ++k) {
          Vec2 x = node_of(solids[i].X, k);
          if (!mesh_->domain.contains(x)) throw StructureEscapedError(k, x, computing);
        }
      double nan = std::numeric_limits<double>::quiet_NaN();
      throw StructureEscapedError(-1, Vec2(nan, nan), computing);
    }
  }

  FluidState fluid;
  std::vector<SolidState> solids;
  std::vector<VecX> multipliers; // last DLM multiplier per structure

private:
  std::unique_ptr<EulerianMesh> mesh_;
  std::vector<std::unique_ptr<LagrangianMesh>> smesh_;
  MixedSpaces spaces_;
  FluidParams fp_;
  SolidParams sp_;
  SchemeConfig sc_;
  CouplingConfig cc_;
  LinearElastic model_;
  FluidMatrices fm_;
  std::vector<SolidMatrices> sm_;
  int step_ = 0;
  double total0_ = -1;

  void fix_boundary(SystemBuilder& sb) const {
    for (int d : spaces_.vdof.boundary_dofs) {
      sb.fix(2 * d);
      sb.fix(2 * d + 1);
    }
  }

  SpMat add_momentum_block(SystemBuilder& sb) const {
    SpMat N = assemble_convection(spaces_, fluid.u);
    sb.add_matrix(0, 0, fm_.M, fp_.rho_f / sc_.dt);
    sb.add_matrix(0, 0, fm_.K);
    sb.add_matrix(0, 0, N, fp_.rho_f);
    return N;
  }

  static double skew_defect(const SpMat& N, const VecX& u) {
    VecX Nu = N * u;
    double scale = Nu.norm() * u.norm();
    return scale > 0 ? std::abs(u.dot(Nu)) / scale : 0.0;
  }

  // Monolithic step: velocity, pressure, zero-mean multiplier, then per
  // structure the new position block and the coupling multiplier block.
  StepReport dlm_step() {
    double dt = sc_.dt;
    int nv = spaces_.n_vel(), np = spaces_.n_pres();
    int ns = n_structures();
    std::vector<int> xoff(ns), loff(ns);
    int n = nv + np + 1;
    for (int i = 0; i < ns; ++i) {
      int m2 = 2 * smesh_[i]->n_points();
      xoff[i] = n;
      n += m2;
      loff[i] = n;
      n += m2;
    }
    SystemBuilder sb(n);
    fix_boundary(sb);
    SpMat N = add_momentum_block(sb);
    add_pressure_blocks(sb, fm_, nv, nv + np);
    std::vector<SpMat> L2(ns);
    for (int i = 0; i < ns; ++i) {
      L2[i] = expand_components(assemble_interaction(spaces_, *smesh_[i], solids[i].X, cc_));
      sb.add_matrix(0, loff[i], SpMat(L2[i].transpose()));
      sb.add_matrix(loff[i], 0, L2[i]);
      if (sp_.delta_rho > 0) sb.add_matrix(xoff[i], xoff[i], sm_[i].M2, sp_.delta_rho / (dt * dt));
      sb.add_matrix(xoff[i], xoff[i], sm_[i].K2);
      sb.add_matrix(xoff[i], loff[i], sm_[i].M2, -1.0);
      sb.add_matrix(loff[i], xoff[i], sm_[i].M2, -1.0 / dt);
      if (sp_.delta_rho > 0)
        sb.add_vector(xoff[i], sm_[i].M2 * (2.0 * solids[i].X - solids[i].X_prev), sp_.delta_rho / (dt * dt));
      sb.add_vector(loff[i], sm_[i].M2 * solids[i].X, -1.0 / dt);
    }
    sb.add_vector(0, fm_.M * fluid.u, fp_.rho_f / dt);
    LinearSolveResult sol = solve_sparse(sb.matrix(), sb.rhs(), sc_.linear_solver_tolerance);
    VecX u_new = sol.x.head(nv);
    double constraint2 = 0;
    for (int i = 0; i < ns; ++i) {
      VecX Xn = sol.x.segment(xoff[i], 2 * smesh_[i]->n_points());
      constraint2 += (L2[i] * u_new - sm_[i].M2 * (Xn - solids[i].X) / dt).squaredNorm();
      multipliers[i] = sol.x.segment(loff[i], 2 * smesh_[i]->n_points());
      advance(solids[i], std::move(Xn));
    }
    fluid.u = std::move(u_new);
    fluid.p = sol.x.segment(nv, np);
    fluid.t += dt;
    step_++;
    return make_report(sol.residual, std::sqrt(constraint2), skew_defect(N, fluid.u));
  }

  // Split step: spread the elastic force and the excess-mass terms from the
  // current embedding, solve the fluid system, then move structure points
  // with the interpolated new velocity.
  StepReport feibm_step() {
    double dt = sc_.dt;
    int nv = spaces_.n_vel(), np = spaces_.n_pres();
    SystemBuilder sb(nv + np + 1);
    fix_boundary(sb);
    SpMat N = add_momentum_block(sb);
    add_pressure_blocks(sb, fm_, nv, nv + np);
    VecX rhs_u = fm_.M * fluid.u * (fp_.rho_f / dt);
    for (int i = 0; i < n_structures(); ++i) {
      if (sp_.delta_rho > 0) {
        sb.add_matrix(0, 0, assemble_excess_inertia(spaces_, *smesh_[i], solids[i].X, sp_.delta_rho, cc_),
                      1.0 / dt);
        rhs_u += excess_inertia_rhs(spaces_, *smesh_[i], solids[i].X, solids[i].X_prev, fluid.u, sp_.delta_rho,
                                    cc_) /
                 dt;
      }
      rhs_u += spread_elastic_force(spaces_, *smesh_[i], solids[i].X, model_, cc_);
    }
    sb.add_vector(0, rhs_u);
    LinearSolveResult sol = solve_sparse(sb.matrix(), sb.rhs(), sc_.linear_solver_tolerance);
    VecX u_new = sol.x.head(nv);
    for (int i = 0; i < n_structures(); ++i) {
      VecX V = interpolate_velocity(spaces_, u_new, *smesh_[i], solids[i].X);
      advance(solids[i], solids[i].X + dt * V);
    }
    fluid.u = std::move(u_new);
    fluid.p = sol.x.segment(nv, np);
    fluid.t += dt;
    step_++;
    return make_report(sol.residual, std::numeric_limits<double>::quiet_NaN(), skew_defect(N, fluid.u));
  }

  StepReport make_report(double solver_residual, double constraint_residual, double conv_skew_rel = 0) {
    StepReport r;
    r.step = step_;
    r.time = fluid.t;
    r.kinetic_fluid = 0.5 * fp_.rho_f * fluid.u.dot(fm_.M * fluid.u);
    r.viscous_dissipation = fluid.u.dot(fm_.K * fluid.u);
    r.div_residual = (fm_.B * fluid.u).norm();
    r.pressure_mean = fm_.mean.dot(fluid.p);
    r.conv_skew_rel = conv_skew_rel;
    r.solver_residual = solver_residual;
    r.constraint_residual = constraint_residual;
    std::vector<int> tally;
    double worst = -1;
    bool any_area = false;
    for (int i = 0; i < n_structures(); ++i) {
      const LagrangianMesh& g = *smesh_[i];
      const SolidState& s = solids[i];
      VecX V = (s.X - s.X_prev) / sc_.dt;
      r.kinetic_solid += 0.5 * sp_.delta_rho * V.dot(sm_[i].M2 * V);
      r.elastic += elastic_energy(g, s.X, model_);
      if (g.codim == 0 || g.closed) {
        r.area += structure_area(g, s.X);
        any_area = true;
      }
      double L = max_segment_length(g, s.X);
      r.L_n = std::max(r.L_n, L);
      CflVerdict v = cfl_check(L, sc_.dt, mesh_->h_x, g.h_s, 2, 2 - g.codim);
      r.cfl_satisfied_at_c1 = r.cfl_satisfied_at_c1 && v.satisfied_at_c1;
      double ratio = v.lhs / v.rhs_scale;
      if (ratio > worst) {
        worst = ratio;
        r.cfl_lhs = v.lhs;
        r.cfl_rhs_scale = v.rhs_scale;
      }
      overlap_tally(g, s.X, *mesh_, tally);
    }
    for (int c : tally) r.C_e_n = std::max(r.C_e_n, c);
    if (!any_area) r.area = std::numeric_limits<double>::quiet_NaN();
    if (total0_ < 0 && step_ == 0) total0_ = r.total();
    // A run that starts with zero energy reports ratio 1 while the total
    // stays negligible and infinity once it does not.
    r.energy_ratio = total0_ > 0 ? r.total() / total0_
                                 : (r.total() > 1e-12 ? std::numeric_limits<double>::infinity() : 1.0);
    return r;
  }
};

} // namespace ibfem
