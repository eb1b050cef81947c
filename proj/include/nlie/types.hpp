#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace nlie {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Positions stored column-wise: one column per point, one row per coordinate.
using PointSet = Eigen::MatrixXd;

/// Non-owning view of a point (a Vec or a column of a PointSet).
using PointRef = Eigen::Ref<const Vec>;

/// Raised when a numerical precondition (CFL bound, ellipticity, ...) does not hold.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an exact small-instance routine is asked to exceed its size budget.
class UnsupportedSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nlie
