#pragma once

// Nonlocal calculus on an EpsGraph: gradients, divergences, convolution,
// velocities and the upwind flux.

#include "nlie/geometry.hpp"

#include <functional>
#include <string>
#include <vector>

namespace nlie {

/// Nonnegative masses on the nodes of a graph (or cells of a grid).
class NodeMeasure {
 public:
  NodeMeasure() = default;
  explicit NodeMeasure(std::vector<double> masses);

  static NodeMeasure dirac(std::size_t size, std::size_t at, double mass = 1.0);

  std::size_t size() const { return masses_.size(); }
  double operator[](std::size_t i) const { return masses_[i]; }
  std::span<const double> masses() const { return masses_; }
  double total() const { return total_; }

  /// Copy scaled to unit total. Throws on zero total.
  NodeMeasure normalized() const;

 private:
  std::vector<double> masses_;
  double total_ = 0.0;
};

/// One real value per directed slot of an EpsGraph.
class EdgeField {
 public:
  EdgeField() = default;
  EdgeField(std::vector<double> values, bool antisymmetric)
      : values_(std::move(values)), antisymmetric_(antisymmetric) {}

  static EdgeField zeros(const EpsGraph& graph, bool antisymmetric = true) {
    return EdgeField(std::vector<double>(graph.num_directed_edges(), 0.0), antisymmetric);
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t slot) const { return values_[slot]; }
  double& operator[](std::size_t slot) { return values_[slot]; }
  std::span<const double> values() const { return values_; }
  bool antisymmetric() const { return antisymmetric_; }

  /// Value on the ordered pair (i, j); 0 when (i, j) is not an edge.
  double at(const EpsGraph& graph, std::size_t i, std::size_t j) const;

  /// max |f_ij + f_ji| over all slots.
  double antisymmetry_defect(const EpsGraph& graph) const;

  EdgeField operator+(const EdgeField& other) const;
  EdgeField operator*(double factor) const;

 private:
  std::vector<double> values_;
  bool antisymmetric_ = false;
};

/// Set the value on slot (i, j) and, for antisymmetric fields, -value on (j, i).
void set_edge(EdgeField& field, const EpsGraph& graph, std::size_t i, std::size_t j, double value);

enum class KernelKind { quadratic_attractive, gaussian, custom };

/// Symmetric interaction kernel K(x, y) with gradient in the first argument,
/// plus an optional external potential P.
class InteractionKernel {
 public:
  using Value = std::function<double(PointRef x, PointRef y)>;
  using Gradient = std::function<Vec(PointRef x, PointRef y)>;
  using Potential = std::function<double(PointRef x)>;
  using PotentialGradient = std::function<Vec(PointRef x)>;

  /// K = |x - y|^2 / 2.
  static InteractionKernel quadratic_attractive();
  /// K = -strength * exp(-|x - y|^2 / (2 width^2)).
  static InteractionKernel gaussian(double width, double strength = 1.0);
  static InteractionKernel custom(Value value, Gradient gradient, std::string label = "custom");
  /// K = 0, P = 0.
  static InteractionKernel zero();

  InteractionKernel with_potential(Potential potential, PotentialGradient gradient) const;
  InteractionKernel without_potential() const;
  /// lambda * K (and lambda * P).
  InteractionKernel scaled(double lambda) const;
  /// K + c, which leaves every nonlocal gradient unchanged.
  InteractionKernel shifted(double c) const;

  double value(PointRef x, PointRef y) const { return value_(x, y); }
  /// grad_x K(x, y).
  Vec gradient(PointRef x, PointRef y) const { return gradient_(x, y); }
  double potential(PointRef x) const { return potential_ ? potential_(x) : 0.0; }
  Vec potential_gradient(PointRef x) const;
  bool has_potential() const { return static_cast<bool>(potential_); }

  KernelKind kind() const { return kind_; }
  const std::string& label() const { return label_; }

 private:
  KernelKind kind_ = KernelKind::custom;
  std::string label_;
  Value value_;
  Gradient gradient_;
  Potential potential_;
  PotentialGradient potential_gradient_;
};

/// (grad phi)_ij = phi_j - phi_i, antisymmetric.
EdgeField nonlocal_gradient(std::span<const double> phi, const EpsGraph& graph);

/// (div j)_i = 1/2 sum_j eta_ij (j_ij - j_ji).
std::vector<double> nonlocal_divergence(const EdgeField& j, const EpsGraph& graph);

/// (K * rho)_i = sum_k K(x_i, x_k) m_k, by direct summation.
std::vector<double> convolve(const InteractionKernel& kernel, const NodeMeasure& rho,
                             const PointSet& positions);
inline std::vector<double> convolve(const InteractionKernel& kernel, const NodeMeasure& rho,
                                    const EpsGraph& graph) {
  return convolve(kernel, rho, graph.nodes());
}

/// First variation E'(rho) = K * rho + P at every node.
std::vector<double> first_variation(const InteractionKernel& kernel, const NodeMeasure& rho,
                                    const PointSet& positions);

/// v_ij = -[(K*rho)_j - (K*rho)_i] - [P_j - P_i].
EdgeField velocity_field(const InteractionKernel& kernel, const NodeMeasure& rho,
                         const EpsGraph& graph);

/// j_ij = (v_ij)_+ m_i mu_j - (v_ij)_- mu_i m_j. At v = 0 both parts vanish.
EdgeField upwind_flux(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v);

}  // namespace nlie
