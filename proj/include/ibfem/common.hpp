#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <string>

namespace ibfem {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Base for all failures raised by this library.  Precondition violations
// (bad argument values caught at API entry) use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A query point lies outside the closed fluid domain.
class OutOfDomainError : public Error {
public:
  explicit OutOfDomainError(const std::string& msg) : Error(msg) {}
};

// A structure node left the fluid domain during time stepping.
class StructureEscapedError : public OutOfDomainError {
public:
  StructureEscapedError(int node, const Vec2& x, int step)
      : OutOfDomainError("structure node " + std::to_string(node) + " escaped the fluid domain at step " +
                         std::to_string(step) + " (position " + std::to_string(x.x()) + ", " +
                         std::to_string(x.y()) + ")"),
        node_index(node), position(x), step_index(step) {}
  int node_index;
  Vec2 position;
  int step_index;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Linear solve failed: singular factorization or residual above tolerance.
class FactorizationError : public Error {
public:
  explicit FactorizationError(const std::string& msg) : Error(msg) {}
};

// A requested feature combination is recognized but not implemented.
class CapabilityError : public Error {
public:
  explicit CapabilityError(const std::string& msg) : Error(msg) {}
};

// Mesh element with non-positive or numerically vanishing measure.
class DegenerateElementError : public Error {
public:
  explicit DegenerateElementError(const std::string& msg) : Error(msg) {}
};

// Operation undefined for the given mesh codimension or element family.
class UnsupportedError : public Error {
public:
  explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

} // namespace ibfem
