#pragma once

// Graph structure (mu, eta^eps) for the localizing nonlocal interaction
// equation, plus the mobility tensors it induces.

#include "nlie/types.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nlie {

enum class ConnectivityKind { ball, anisotropic, tabulated };

/// Reference connectivity theta(z, w): z is the edge midpoint, w the rescaled
/// offset. Every kind has bounded support |w| <= support_radius().
class ConnectivitySpec {
 public:
  using ScalarMap = std::function<double(const Vec&)>;
  using TensorMap = std::function<Mat(const Vec&)>;
  using Callback = std::function<double(const Vec& z, const Vec& w)>;

  /// value * 1{|w| < radius}. The sphere |w| = radius itself is outside.
  static ConnectivitySpec ball(int dim, double radius = 1.0, double value = 1.0);

  /// normalization(z) * 1{<w, D(z)^{-1} w> < R(z)^2}. `support_radius` must
  /// bound R(z) * sqrt(lambda_max(D(z))) for every z.
  static ConnectivitySpec anisotropic(int dim, TensorMap shape, ScalarMap radius,
                                      ScalarMap normalization, double support_radius);

  /// Arbitrary callback; values outside |w| <= support_radius are forced to 0.
  static ConnectivitySpec tabulated(int dim, Callback fn, double support_radius,
                                    std::string label = "tabulated");

  double operator()(const Vec& z, const Vec& w) const;

  int dim() const { return dim_; }
  ConnectivityKind kind() const { return kind_; }
  double support_radius() const { return support_radius_; }
  const std::string& label() const { return label_; }

 private:
  ConnectivitySpec() = default;

  ConnectivityKind kind_ = ConnectivityKind::ball;
  int dim_ = 1;
  double support_radius_ = 1.0;
  std::string label_;
  Callback eval_;
};

/// Density mu~ of the base measure with its declared bounds c_mu <= mu~ <= C_mu.
struct BaseMeasureSpec {
  std::function<double(const Vec&)> density;
  double lower_bound = 1.0;
  double upper_bound = 1.0;

  static BaseMeasureSpec uniform(double value = 1.0);
};

struct UndirectedEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double eta = 0.0;
};

/// Finite graph for a fixed eps: nodes, base-measure weights mu_i and a
/// symmetric weight eta_ij. Stored as CSR over directed slots so that every
/// undirected edge occupies two slots (i->j and j->i) linked by reverse().
class EpsGraph {
 public:
  EpsGraph(double eps, PointSet nodes, std::vector<double> mu, std::vector<UndirectedEdge> edges,
           double cell_volume = 0.0);

  double eps() const { return eps_; }
  int dim() const { return static_cast<int>(nodes_.rows()); }
  std::size_t num_nodes() const { return static_cast<std::size_t>(nodes_.cols()); }
  std::size_t num_directed_edges() const { return targets_.size(); }
  double cell_volume() const { return cell_volume_; }

  const PointSet& nodes() const { return nodes_; }
  Vec node(std::size_t i) const { return nodes_.col(static_cast<Eigen::Index>(i)); }
  std::span<const double> mu() const { return mu_; }

  std::size_t row_begin(std::size_t i) const { return offsets_[i]; }
  std::size_t row_end(std::size_t i) const { return offsets_[i + 1]; }
  std::size_t source(std::size_t slot) const { return sources_[slot]; }
  std::size_t target(std::size_t slot) const { return targets_[slot]; }
  double eta(std::size_t slot) const { return weights_[slot]; }
  std::size_t reverse(std::size_t slot) const { return reverse_[slot]; }

  /// Each undirected edge once, with i < j, in CSR order.
  std::vector<UndirectedEdge> undirected_edges() const;

 private:
  double eps_;
  double cell_volume_;
  PointSet nodes_;
  std::vector<double> mu_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> sources_;
  std::vector<std::size_t> targets_;
  std::vector<double> weights_;
  std::vector<std::size_t> reverse_;
};

/// eta^eps(x, y) = eps^{-(d+2)} theta((x+y)/2, (x-y)/eps). Throws on x == y.
double eval_eta(const ConnectivitySpec& spec, double eps, const Vec& x, const Vec& y);

/// mu_i = mu~(x_i) * cell_volume; edges are exactly the pairs with eta > 0.
/// Candidate pairs come from a uniform spatial hash with bucket size C_supp*eps.
EpsGraph build_graph(const PointSet& nodes, const BaseMeasureSpec& base,
                     const ConnectivitySpec& spec, double eps, double cell_volume);

/// Regular lattice lo + k*h (k = 0..count-1 per axis), lexicographic with axis 0 fastest.
PointSet lattice_points(const Vec& lower, double h, const std::vector<std::size_t>& counts);

/// T^eps(x_i) = 1/2 sum_j (x_i - x_j)(x_i - x_j)^T eta_ij mu_j.
Mat tensor_eps(const EpsGraph& graph, std::size_t node);

/// T(x) = 1/2 mu~(x) int w w^T theta(x, w) dw, midpoint rule with `resolution`
/// points per axis on [-C_supp, C_supp]^d.
Mat tensor_limit(const ConnectivitySpec& spec, const BaseMeasureSpec& base, const Vec& x,
                 int resolution);

/// C_d = int_{B_1} y_1^2 dy = pi^{d/2} / (2 Gamma(d/2 + 2)).
double ball_second_moment(int dim);
/// |B_1| in R^d.
double unit_ball_volume(int dim);

/// 1/2 d_norm sqrt(det D) C_d R^{d+2} D for the ellipsoidal connectivity.
Mat tensor_closed_form(const Mat& shape, double radius, double normalization);

/// Normalization making tensor_closed_form return `shape` itself.
double identity_normalization(const Mat& shape, double radius);

enum class TensorKind { epsilon_tensor, limit_tensor, closed_form, constant };

/// Symmetric positive-definite matrix field x -> T(x).
class TensorField {
 public:
  using Eval = std::function<Mat(const Vec&)>;

  static TensorField constant(Mat value);
  static TensorField limit(ConnectivitySpec spec, BaseMeasureSpec base, int resolution);
  static TensorField closed_form(int dim, ConnectivitySpec::TensorMap shape,
                                 ConnectivitySpec::ScalarMap radius,
                                 ConnectivitySpec::ScalarMap normalization);
  /// T^eps evaluated at the graph node closest to x.
  static TensorField epsilon(std::shared_ptr<const EpsGraph> graph);

  Mat operator()(const Vec& x) const;
  TensorField scaled(double factor) const;

  int dim() const { return dim_; }
  TensorKind kind() const { return kind_; }
  bool is_constant() const { return kind_ == TensorKind::constant; }
  const Mat& constant_value() const { return constant_; }

 private:
  TensorKind kind_ = TensorKind::constant;
  int dim_ = 1;
  Mat constant_;
  Eval eval_;
};

/// Throws PreconditionError unless `m` is symmetric (1e-12 relative) with all
/// eigenvalues in [lower, upper].
void check_elliptic(const Mat& m, double lower, double upper);

struct DistanceOptions {
  int steps = 64;  ///< lattice steps between x and y along the longest axis
};

/// Distance of the Riemannian metric induced by T^{-1}. Exact for constant T;
/// otherwise Dijkstra on an auxiliary lattice with midpoint edge costs (an
/// upper-bound style approximation that improves with `steps`).
double dT_distance(const TensorField& tensor, const Vec& x, const Vec& y,
                   const DistanceOptions& options = {});

struct SamplePlan {
  std::vector<Vec> z_points;
  std::vector<Vec> x_points;
  int w_resolution = 64;  ///< midpoint points per axis for w-quadrature
  double w_box = 0.0;     ///< half-width of the w box; 0 means 1.5 * C_supp
};

struct AssumptionCheck {
  std::string name;
  double value = 0.0;
  bool passed = false;
  std::string detail;
};

struct AssumptionReport {
  double C_supp = 0.0;
  double empirical_support = 0.0;
  double C_mom = 0.0;
  double c_nd = 0.0;
  double c_mu = 0.0;
  double C_mu = 0.0;
  double C_meas = 0.0;
  double C_int = 0.0;
  double lipschitz_mu = 0.0;     ///< sampled surrogate for omega_mu
  double lipschitz_theta = 0.0;  ///< sampled surrogate for omega_theta
  std::vector<AssumptionCheck> checks;

  bool all_passed() const;
  const AssumptionCheck* find(const std::string& name) const;
};

/// Empirical check of (mu1), (mu2), (theta1)-(theta5) on a finite sample.
/// Failures are report entries, never exceptions.
AssumptionReport validate_assumptions(const ConnectivitySpec& spec, const BaseMeasureSpec& base,
                                      const SamplePlan& plan);

/// Columnar text format:
///   # epsgraph d=<d> eps=<eps> n=<N>
///   v <id> <x1..xd> <mu_i>
///   e <i> <j> <eta>          (i < j, each undirected edge once)
void write_graph(std::ostream& out, const EpsGraph& graph);
EpsGraph read_graph(std::istream& in);

}  // namespace nlie
