#pragma once

#include "nlie/calculus.hpp"

#include <vector>

namespace nlie::detail {

/// x -> sum_k m_k grad_x K(x, x_k) + grad P(x). The quadratic kernel reduces
/// to M x - sum_k m_k x_k.
class DriftEvaluator {
 public:
  DriftEvaluator(const InteractionKernel& kernel, const PointSet& positions, const NodeMeasure& rho)
      : kernel_(kernel), positions_(positions), rho_(rho) {
    if (kernel.kind() == KernelKind::quadratic_attractive) {
      quadratic_ = true;
      first_ = Vec::Zero(positions.rows());
      for (std::size_t c = 0; c < rho.size(); ++c) {
        if (rho[c] == 0.0) continue;
        mass_ += rho[c];
        first_ += rho[c] * positions.col(static_cast<Eigen::Index>(c));
      }
    } else {
      for (std::size_t c = 0; c < rho.size(); ++c) {
        if (rho[c] != 0.0) support_.push_back(c);
      }
    }
  }

  Vec operator()(const Vec& x) const {
    Vec g;
    if (quadratic_) {
      g = mass_ * x - first_;
    } else {
      g = Vec::Zero(x.size());
      for (std::size_t c : support_) {
        g += rho_[c] * kernel_.gradient(x, positions_.col(static_cast<Eigen::Index>(c)));
      }
    }
    if (kernel_.has_potential()) g += kernel_.potential_gradient(x);
    return g;
  }

  const std::vector<std::size_t>& support() const { return support_; }

 private:
  const InteractionKernel& kernel_;
  const PointSet& positions_;
  const NodeMeasure& rho_;
  bool quadratic_ = false;
  double mass_ = 0.0;
  Vec first_;
  std::vector<std::size_t> support_;
};

}  // namespace nlie::detail
