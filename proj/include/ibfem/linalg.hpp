#pragma once

#include <Eigen/SparseLU>

#include "ibfem/common.hpp"

namespace ibfem {

// Triplet accumulator for one square system with homogeneous Dirichlet
// elimination: entries touching a fixed index are dropped symmetrically and
// the diagonal of every fixed index is set to 1 with zero right-hand side.
class SystemBuilder {
public:
  explicit SystemBuilder(int n) : n_(n), fixed_(n, 0), rhs_(VecX::Zero(n)) {}

  void fix(int i) { fixed_[i] = 1; }
  bool is_fixed(int i) const { return fixed_[i] != 0; }

  void add(int i, int j, double v) {
    if (v != 0.0 && !fixed_[i] && !fixed_[j]) trips_.emplace_back(i, j, v);
  }
  void add_rhs(int i, double v) {
    if (!fixed_[i]) rhs_[i] += v;
  }
  void add_matrix(int r0, int c0, const SpMat& A, double scale = 1.0) {
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) add(r0 + it.row(), c0 + it.col(), scale * it.value());
  }
  // Scatters A into rows r0+2i+c, cols c0+2j+c for both components c.
  void add_matrix_2c(int r0, int c0, const SpMat& A, double scale = 1.0) {
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) {
        add(r0 + 2 * it.row(), c0 + 2 * it.col(), scale * it.value());
        add(r0 + 2 * it.row() + 1, c0 + 2 * it.col() + 1, scale * it.value());
      }
  }
  void add_vector(int r0, const VecX& v, double scale = 1.0) {
    for (int i = 0; i < v.size(); ++i) add_rhs(r0 + i, scale * v[i]);
  }

  SpMat matrix() const {
    std::vector<Triplet> t = trips_;
    for (int i = 0; i < n_; ++i)
      if (fixed_[i]) t.emplace_back(i, i, 1.0);
    SpMat A(n_, n_);
    A.setFromTriplets(t.begin(), t.end());
    return A;
  }
  const VecX& rhs() const { return rhs_; }
  int size() const { return n_; }

private:
  int n_;
  std::vector<Triplet> trips_;
  std::vector<char> fixed_;
  VecX rhs_;
};

struct LinearSolveResult {
  VecX x;
  double residual = 0; // ||Ax-b|| / max(||b||, eps)
};

// Sparse LU with a relative residual guard.  Raises FactorizationError on a
// singular factorization, non-finite solution, or residual above tol.
inline LinearSolveResult solve_sparse(const SpMat& A, const VecX& b, double tol = 1e-9) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw std::invalid_argument("solve_sparse: dimension mismatch");
  Eigen::SparseLU<SpMat> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw FactorizationError("solve_sparse: factorization failed");
  LinearSolveResult r;
  r.x = lu.solve(b);
  double bnorm = std::max(b.norm(), 1e-300);
  r.residual = (A * r.x - b).norm() / bnorm;
  if (!r.x.allFinite() || !std::isfinite(r.residual))
    throw FactorizationError("solve_sparse: non-finite solution");
  if (r.residual > tol)
    throw FactorizationError("solve_sparse: residual " + std::to_string(r.residual) + " exceeds tolerance " +
                             std::to_string(tol));
  return r;
}

// Expands a scalar coupling matrix to interleaved vector dofs.
inline SpMat expand_components(const SpMat& S) {
  std::vector<Triplet> t;
  t.reserve(2 * S.nonZeros());
  for (int k = 0; k < S.outerSize(); ++k)
    for (SpMat::InnerIterator it(S, k); it; ++it) {
      t.emplace_back(2 * it.row(), 2 * it.col(), it.value());
      t.emplace_back(2 * it.row() + 1, 2 * it.col() + 1, it.value());
    }
  SpMat A(2 * S.rows(), 2 * S.cols());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

} // namespace ibfem
