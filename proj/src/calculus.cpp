#include "nlie/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nlie {

// ---------------------------------------------------------------------------
// NodeMeasure

NodeMeasure::NodeMeasure(std::vector<double> masses) : masses_(std::move(masses)) {
  for (std::size_t i = 0; i < masses_.size(); ++i) {
    if (!(masses_[i] >= 0.0) || !std::isfinite(masses_[i])) {
      std::ostringstream msg;
      msg << "mass at node " << i << " is negative or not finite (" << masses_[i] << ")";
      throw std::invalid_argument(msg.str());
    }
  }
  total_ = std::accumulate(masses_.begin(), masses_.end(), 0.0);
}

NodeMeasure NodeMeasure::dirac(std::size_t size, std::size_t at, double mass) {
  if (at >= size) throw std::out_of_range("dirac location out of range");
  std::vector<double> m(size, 0.0);
  m[at] = mass;
  return NodeMeasure(std::move(m));
}

NodeMeasure NodeMeasure::normalized() const {
  if (!(total_ > 0.0)) throw std::invalid_argument("cannot normalize a measure with zero mass");
  std::vector<double> m(masses_);
  for (double& v : m) v /= total_;
  return NodeMeasure(std::move(m));
}

// ---------------------------------------------------------------------------
// EdgeField

namespace {

std::size_t find_slot(const EpsGraph& graph, std::size_t i, std::size_t j) {
  for (std::size_t s = graph.row_begin(i); s < graph.row_end(i); ++s) {
    if (graph.target(s) == j) return s;
  }
  return graph.num_directed_edges();
}

}  // namespace

double EdgeField::at(const EpsGraph& graph, std::size_t i, std::size_t j) const {
  const std::size_t s = find_slot(graph, i, j);
  return s == graph.num_directed_edges() ? 0.0 : values_[s];
}

double EdgeField::antisymmetry_defect(const EpsGraph& graph) const {
  double worst = 0.0;
  for (std::size_t s = 0; s < values_.size(); ++s) {
    worst = std::max(worst, std::abs(values_[s] + values_[graph.reverse(s)]));
  }
  return worst;
}

EdgeField EdgeField::operator+(const EdgeField& other) const {
  if (other.size() != size()) throw std::invalid_argument("edge field size mismatch");
  std::vector<double> out(values_);
  for (std::size_t s = 0; s < out.size(); ++s) out[s] += other.values_[s];
  return EdgeField(std::move(out), antisymmetric_ && other.antisymmetric_);
}

EdgeField EdgeField::operator*(double factor) const {
  std::vector<double> out(values_);
  for (double& v : out) v *= factor;
  return EdgeField(std::move(out), antisymmetric_);
}

void set_edge(EdgeField& field, const EpsGraph& graph, std::size_t i, std::size_t j, double value) {
  const std::size_t s = find_slot(graph, i, j);
  if (s == graph.num_directed_edges()) {
    std::ostringstream msg;
    msg << "(" << i << "," << j << ") is not an edge";
    throw std::invalid_argument(msg.str());
  }
  field[s] = value;
  if (field.antisymmetric()) field[graph.reverse(s)] = -value;
}

// ---------------------------------------------------------------------------
// InteractionKernel

InteractionKernel InteractionKernel::quadratic_attractive() {
  InteractionKernel k;
  k.kind_ = KernelKind::quadratic_attractive;
  k.label_ = "quadratic";
  k.value_ = [](PointRef x, PointRef y) { return 0.5 * (x - y).squaredNorm(); };
  k.gradient_ = [](PointRef x, PointRef y) -> Vec { return x - y; };
  return k;
}

InteractionKernel InteractionKernel::gaussian(double width, double strength) {
  if (!(width > 0.0)) throw std::invalid_argument("gaussian width must be positive");
  InteractionKernel k;
  k.kind_ = KernelKind::gaussian;
  std::ostringstream label;
  label << "gaussian(sigma=" << width << ",strength=" << strength << ")";
  k.label_ = label.str();
  const double inv = 1.0 / (2.0 * width * width);
  k.value_ = [inv, strength](PointRef x, PointRef y) {
    return -strength * std::exp(-(x - y).squaredNorm() * inv);
  };
  k.gradient_ = [inv, strength](PointRef x, PointRef y) -> Vec {
    const Vec diff = x - y;
    return (2.0 * inv * strength * std::exp(-diff.squaredNorm() * inv)) * diff;
  };
  return k;
}

InteractionKernel InteractionKernel::custom(Value value, Gradient gradient, std::string label) {
  InteractionKernel k;
  k.kind_ = KernelKind::custom;
  k.label_ = std::move(label);
  k.value_ = std::move(value);
  k.gradient_ = std::move(gradient);
  return k;
}

InteractionKernel InteractionKernel::zero() {
  return custom([](PointRef, PointRef) { return 0.0; },
                [](PointRef x, PointRef) -> Vec { return Vec::Zero(x.size()); }, "zero");
}

InteractionKernel InteractionKernel::with_potential(Potential potential,
                                                    PotentialGradient gradient) const {
  InteractionKernel k = *this;
  k.potential_ = std::move(potential);
  k.potential_gradient_ = std::move(gradient);
  k.label_ += "+P";
  return k;
}

InteractionKernel InteractionKernel::without_potential() const {
  InteractionKernel k = *this;
  k.potential_ = nullptr;
  k.potential_gradient_ = nullptr;
  return k;
}

InteractionKernel InteractionKernel::scaled(double lambda) const {
  InteractionKernel k = *this;
  k.kind_ = KernelKind::custom;
  k.value_ = [inner = value_, lambda](PointRef x, PointRef y) { return lambda * inner(x, y); };
  k.gradient_ = [inner = gradient_, lambda](PointRef x, PointRef y) -> Vec {
    return lambda * inner(x, y);
  };
  if (potential_) {
    k.potential_ = [inner = potential_, lambda](PointRef x) { return lambda * inner(x); };
    k.potential_gradient_ = [inner = potential_gradient_, lambda](PointRef x) -> Vec {
      return lambda * inner(x);
    };
  }
  std::ostringstream label;
  label << lambda << "*" << label_;
  k.label_ = label.str();
  return k;
}

InteractionKernel InteractionKernel::shifted(double c) const {
  InteractionKernel k = *this;
  k.kind_ = KernelKind::custom;
  k.value_ = [inner = value_, c](PointRef x, PointRef y) { return inner(x, y) + c; };
  std::ostringstream label;
  label << label_ << "+" << c;
  k.label_ = label.str();
  return k;
}

Vec InteractionKernel::potential_gradient(PointRef x) const {
  return potential_gradient_ ? potential_gradient_(x) : Vec::Zero(x.size());
}

// ---------------------------------------------------------------------------
// Operators

EdgeField nonlocal_gradient(std::span<const double> phi, const EpsGraph& graph) {
  if (phi.size() != graph.num_nodes()) throw std::invalid_argument("phi must have one value per node");
  std::vector<double> out(graph.num_directed_edges());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = phi[graph.target(s)] - phi[graph.source(s)];
  return EdgeField(std::move(out), true);
}

std::vector<double> nonlocal_divergence(const EdgeField& j, const EpsGraph& graph) {
  if (j.size() != graph.num_directed_edges()) throw std::invalid_argument("edge field does not match graph");
  std::vector<double> div(graph.num_nodes(), 0.0);
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    double acc = 0.0;
    for (std::size_t s = graph.row_begin(i); s < graph.row_end(i); ++s) {
      acc += graph.eta(s) * (j[s] - j[graph.reverse(s)]);
    }
    div[i] = 0.5 * acc;
  }
  return div;
}

std::vector<double> convolve(const InteractionKernel& kernel, const NodeMeasure& rho,
                             const PointSet& positions) {
  const auto n = static_cast<std::size_t>(positions.cols());
  if (rho.size() != n) throw std::invalid_argument("measure does not match node count");
  std::vector<std::size_t> support;
  for (std::size_t k = 0; k < n; ++k) {
    if (rho[k] != 0.0) support.push_back(k);
  }
  std::vector<double> out(n, 0.0);
  if (kernel.kind() == KernelKind::quadratic_attractive && !support.empty()) {
    // 1/2 sum_k m_k |x - x_k|^2 expanded about the center of mass.
    const Eigen::Index d = positions.rows();
    double mass = 0.0;
    Vec center = Vec::Zero(d);
    for (std::size_t k : support) {
      mass += rho[k];
      center += rho[k] * positions.col(static_cast<Eigen::Index>(k));
    }
    center /= mass;
    double spread = 0.0;
    for (std::size_t k : support) spread += rho[k] * (positions.col(static_cast<Eigen::Index>(k)) - center).squaredNorm();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = 0.5 * (mass * (positions.col(static_cast<Eigen::Index>(i)) - center).squaredNorm() + spread);
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = positions.col(static_cast<Eigen::Index>(i));
    double acc = 0.0;
    for (std::size_t k : support) acc += kernel.value(xi, positions.col(static_cast<Eigen::Index>(k))) * rho[k];
    out[i] = acc;
  }
  return out;
}

std::vector<double> first_variation(const InteractionKernel& kernel, const NodeMeasure& rho,
                                    const PointSet& positions) {
  std::vector<double> phi = convolve(kernel, rho, positions);
  if (kernel.has_potential()) {
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += kernel.potential(positions.col(static_cast<Eigen::Index>(i)));
  }
  return phi;
}

EdgeField velocity_field(const InteractionKernel& kernel, const NodeMeasure& rho,
                         const EpsGraph& graph) {
  const std::vector<double> phi = first_variation(kernel, rho, graph.nodes());
  std::vector<double> v(graph.num_directed_edges());
  for (std::size_t s = 0; s < v.size(); ++s) v[s] = -(phi[graph.target(s)] - phi[graph.source(s)]);
  return EdgeField(std::move(v), true);
}

EdgeField upwind_flux(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v) {
  if (v.size() != graph.num_directed_edges()) throw std::invalid_argument("velocity does not match graph");
  if (rho.size() != graph.num_nodes()) throw std::invalid_argument("measure does not match graph");
  const auto mu = graph.mu();
  std::vector<double> j(v.size());
  for (std::size_t s = 0; s < j.size(); ++s) {
    const std::size_t a = graph.source(s);
    const std::size_t b = graph.target(s);
    const double vp = std::max(v[s], 0.0);
    const double vm = std::max(-v[s], 0.0);
    j[s] = vp * (rho[a] * mu[b]) - vm * (mu[a] * rho[b]);
  }
  return EdgeField(std::move(j), true);
}

}  // namespace nlie
