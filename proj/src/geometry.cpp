#include "nlie/geometry.hpp"

#include "spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>
#include <utility>

namespace nlie {

namespace {

// Points on the sphere |w| = radius (up to rounding of lattice offsets) are
// treated as outside the open ball.
constexpr double kBoundaryTol = 2e-9;

void require_dim(int dim) {
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
}

}  // namespace

// ---------------------------------------------------------------------------
// ConnectivitySpec

ConnectivitySpec ConnectivitySpec::ball(int dim, double radius, double value) {
  require_dim(dim);
  if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
  if (value < 0.0) throw std::invalid_argument("ball value must be nonnegative");
  ConnectivitySpec s;
  s.kind_ = ConnectivityKind::ball;
  s.dim_ = dim;
  s.support_radius_ = radius;
  std::ostringstream label;
  label << "ball(R=" << radius << ",value=" << value << ")";
  s.label_ = label.str();
  const double r2 = radius * radius * (1.0 - kBoundaryTol);
  s.eval_ = [r2, value](const Vec&, const Vec& w) { return w.squaredNorm() < r2 ? value : 0.0; };
  return s;
}

ConnectivitySpec ConnectivitySpec::anisotropic(int dim, TensorMap shape, ScalarMap radius,
                                               ScalarMap normalization, double support_radius) {
  require_dim(dim);
  if (!(support_radius > 0.0)) throw std::invalid_argument("support radius must be positive");
  ConnectivitySpec s;
  s.kind_ = ConnectivityKind::anisotropic;
  s.dim_ = dim;
  s.support_radius_ = support_radius;
  s.label_ = "anisotropic";
  s.eval_ = [shape = std::move(shape), radius = std::move(radius),
             normalization = std::move(normalization)](const Vec& z, const Vec& w) {
    const Mat D = shape(z);
    const double R = radius(z);
    const double q = w.dot(D.ldlt().solve(w));
    return q < R * R * (1.0 - kBoundaryTol) ? normalization(z) : 0.0;
  };
  return s;
}

ConnectivitySpec ConnectivitySpec::tabulated(int dim, Callback fn, double support_radius,
                                             std::string label) {
  require_dim(dim);
  if (!(support_radius > 0.0)) throw std::invalid_argument("support radius must be positive");
  ConnectivitySpec s;
  s.kind_ = ConnectivityKind::tabulated;
  s.dim_ = dim;
  s.support_radius_ = support_radius;
  s.label_ = std::move(label);
  const double r2 = support_radius * support_radius;
  s.eval_ = [fn = std::move(fn), r2](const Vec& z, const Vec& w) {
    return w.squaredNorm() <= r2 ? fn(z, w) : 0.0;
  };
  return s;
}

double ConnectivitySpec::operator()(const Vec& z, const Vec& w) const { return eval_(z, w); }

BaseMeasureSpec BaseMeasureSpec::uniform(double value) {
  return {[value](const Vec&) { return value; }, value, value};
}

// ---------------------------------------------------------------------------
// EpsGraph

EpsGraph::EpsGraph(double eps, PointSet nodes, std::vector<double> mu,
                   std::vector<UndirectedEdge> edges, double cell_volume)
    : eps_(eps), cell_volume_(cell_volume), nodes_(std::move(nodes)), mu_(std::move(mu)) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const std::size_t n = num_nodes();
  if (mu_.size() != n) throw std::invalid_argument("mu weights must match node count");
  for (double m : mu_) {
    if (!(m >= 0.0)) throw std::invalid_argument("mu weights must be nonnegative");
  }

  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (const auto& e : edges) {
    if (e.i >= n || e.j >= n) throw std::invalid_argument("edge endpoint out of range");
    if (e.i == e.j) throw std::invalid_argument("self-loops are not allowed");
    if (!(e.eta > 0.0)) throw std::invalid_argument("edge weights must be positive");
    rows[e.i].emplace_back(e.j, e.eta);
    rows[e.j].emplace_back(e.i, e.eta);
  }

  offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = rows[i];
    std::sort(row.begin(), row.end());
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k].first == row[k - 1].first) {
        std::ostringstream msg;
        msg << "duplicate edge (" << i << "," << row[k].first << ")";
        throw std::invalid_argument(msg.str());
      }
    }
    offsets_[i + 1] = offsets_[i] + row.size();
  }

  const std::size_t m = offsets_[n];
  sources_.resize(m);
  targets_.resize(m);
  weights_.resize(m);
  reverse_.resize(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t slot = offsets_[i];
    for (const auto& [j, w] : rows[i]) {
      sources_[slot] = i;
      targets_[slot] = j;
      weights_[slot] = w;
      ++slot;
    }
  }
  for (std::size_t slot = 0; slot < m; ++slot) {
    const std::size_t j = targets_[slot];
    const auto first = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[j]);
    const auto last = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[j + 1]);
    const auto it = std::lower_bound(first, last, sources_[slot]);
    reverse_[slot] = static_cast<std::size_t>(it - targets_.begin());
  }
}

std::vector<UndirectedEdge> EpsGraph::undirected_edges() const {
  std::vector<UndirectedEdge> out;
  out.reserve(num_directed_edges() / 2);
  for (std::size_t slot = 0; slot < num_directed_edges(); ++slot) {
    if (sources_[slot] < targets_[slot]) out.push_back({sources_[slot], targets_[slot], weights_[slot]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction

double eval_eta(const ConnectivitySpec& spec, double eps, const Vec& x, const Vec& y) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (x.size() != spec.dim() || y.size() != spec.dim()) {
    throw std::invalid_argument("point dimension does not match connectivity");
  }
  if (x == y) throw std::invalid_argument("eta is only defined off the diagonal (x == y)");
  const Vec w = (x - y) / eps;
  if (w.norm() > spec.support_radius()) return 0.0;
  const Vec z = 0.5 * (x + y);
  return std::pow(eps, -(spec.dim() + 2)) * spec(z, w);
}

EpsGraph build_graph(const PointSet& nodes, const BaseMeasureSpec& base,
                     const ConnectivitySpec& spec, double eps, double cell_volume) {
  if (!(cell_volume > 0.0)) throw std::invalid_argument("cell_volume must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (nodes.rows() != spec.dim()) throw std::invalid_argument("node dimension does not match connectivity");

  const std::size_t n = static_cast<std::size_t>(nodes.cols());
  std::vector<double> mu(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = base.density(nodes.col(static_cast<Eigen::Index>(i))) * cell_volume;
  }

  const double reach = spec.support_radius() * eps;
  detail::SpatialHash hash(nodes, reach);
  std::vector<UndirectedEdge> edges;
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec xi = nodes.col(static_cast<Eigen::Index>(i));
    candidates.clear();
    hash.for_each_candidate(xi, [&](std::size_t j) {
      if (j > i) candidates.push_back(j);
    });
    std::sort(candidates.begin(), candidates.end());
    for (std::size_t j : candidates) {
      const Vec xj = nodes.col(static_cast<Eigen::Index>(j));
      const double dist = (xi - xj).norm();
      if (dist == 0.0) {
        std::ostringstream msg;
        msg << "duplicate nodes " << i << " and " << j;
        throw std::invalid_argument(msg.str());
      }
      if (dist > reach) continue;
      const double eta = eval_eta(spec, eps, xi, xj);
      if (eta > 0.0) edges.push_back({i, j, eta});
    }
  }
  return EpsGraph(eps, nodes, std::move(mu), std::move(edges), cell_volume);
}

PointSet lattice_points(const Vec& lower, double h, const std::vector<std::size_t>& counts) {
  const auto d = static_cast<Eigen::Index>(counts.size());
  if (lower.size() != d) throw std::invalid_argument("lattice corner dimension mismatch");
  std::size_t total = 1;
  for (std::size_t c : counts) total *= c;
  PointSet pts(d, static_cast<Eigen::Index>(total));
  std::vector<std::size_t> idx(counts.size(), 0);
  for (std::size_t p = 0; p < total; ++p) {
    for (Eigen::Index a = 0; a < d; ++a) {
      pts(a, static_cast<Eigen::Index>(p)) = lower[a] + h * static_cast<double>(idx[static_cast<std::size_t>(a)]);
    }
    for (std::size_t a = 0; a < counts.size(); ++a) {
      if (++idx[a] < counts[a]) break;
      idx[a] = 0;
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Tensors

Mat tensor_eps(const EpsGraph& graph, std::size_t node) {
  if (node >= graph.num_nodes()) throw std::out_of_range("node index out of range");
  const int d = graph.dim();
  Mat T = Mat::Zero(d, d);
  const Vec xi = graph.node(node);
  const auto mu = graph.mu();
  for (std::size_t slot = graph.row_begin(node); slot < graph.row_end(node); ++slot) {
    const std::size_t j = graph.target(slot);
    const Vec diff = xi - graph.node(j);
    T.noalias() += (graph.eta(slot) * mu[j]) * (diff * diff.transpose());
  }
  return 0.5 * T;
}

Mat tensor_limit(const ConnectivitySpec& spec, const BaseMeasureSpec& base, const Vec& x,
                 int resolution) {
  if (resolution < 2) throw std::invalid_argument("quadrature resolution must be >= 2");
  const int d = spec.dim();
  const double half = spec.support_radius();
  const double dw = 2.0 * half / resolution;
  const double cell = std::pow(dw, d);
  Mat acc = Mat::Zero(d, d);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  Vec w(d);
  while (true) {
    for (int a = 0; a < d; ++a) w[a] = -half + (idx[static_cast<std::size_t>(a)] + 0.5) * dw;
    const double th = spec(x, w);
    if (th != 0.0) acc.noalias() += th * (w * w.transpose());
    int a = 0;
    while (a < d && idx[static_cast<std::size_t>(a)] == resolution - 1) idx[static_cast<std::size_t>(a++)] = 0;
    if (a == d) break;
    ++idx[static_cast<std::size_t>(a)];
  }
  return 0.5 * base.density(x) * cell * acc;
}

double ball_second_moment(int dim) {
  require_dim(dim);
  const double half_d = 0.5 * dim;
  return std::pow(std::numbers::pi, half_d) / (2.0 * std::tgamma(half_d + 2.0));
}

double unit_ball_volume(int dim) {
  require_dim(dim);
  const double half_d = 0.5 * dim;
  return std::pow(std::numbers::pi, half_d) / std::tgamma(half_d + 1.0);
}

namespace {

void require_spd(const Mat& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(what) + " must be a nonempty square matrix");
  }
  const double scale = std::max(1.0, m.norm());
  if ((m - m.transpose()).norm() > 1e-12 * scale) {
    throw std::invalid_argument(std::string(what) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw std::invalid_argument(std::string(what) + " must be positive definite");
  }
}

}  // namespace

Mat tensor_closed_form(const Mat& shape, double radius, double normalization) {
  require_spd(shape, "shape tensor D");
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  if (!(normalization > 0.0)) throw std::invalid_argument("normalization must be positive");
  const int d = static_cast<int>(shape.rows());
  return 0.5 * normalization * std::sqrt(shape.determinant()) * ball_second_moment(d) *
         std::pow(radius, d + 2) * shape;
}

double identity_normalization(const Mat& shape, double radius) {
  require_spd(shape, "shape tensor D");
  const int d = static_cast<int>(shape.rows());
  return 2.0 / (ball_second_moment(d) * std::pow(radius, d + 2) * std::sqrt(shape.determinant()));
}

void check_elliptic(const Mat& m, double lower, double upper) {
  const double scale = std::max(m.norm(), 1e-300);
  if ((m - m.transpose()).norm() > 1e-12 * scale) {
    throw PreconditionError("tensor is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < lower || hi > upper) {
    std::ostringstream msg;
    msg << "tensor eigenvalues [" << lo << ", " << hi << "] outside [" << lower << ", " << upper << "]";
    throw PreconditionError(msg.str());
  }
}

// ---------------------------------------------------------------------------
// TensorField

TensorField TensorField::constant(Mat value) {
  require_spd(value, "constant tensor");
  TensorField f;
  f.kind_ = TensorKind::constant;
  f.dim_ = static_cast<int>(value.rows());
  f.constant_ = value;
  f.eval_ = [value = std::move(value)](const Vec&) { return value; };
  return f;
}

TensorField TensorField::limit(ConnectivitySpec spec, BaseMeasureSpec base, int resolution) {
  TensorField f;
  f.kind_ = TensorKind::limit_tensor;
  f.dim_ = spec.dim();
  f.eval_ = [spec = std::move(spec), base = std::move(base), resolution](const Vec& x) {
    return tensor_limit(spec, base, x, resolution);
  };
  return f;
}

TensorField TensorField::closed_form(int dim, ConnectivitySpec::TensorMap shape,
                                     ConnectivitySpec::ScalarMap radius,
                                     ConnectivitySpec::ScalarMap normalization) {
  TensorField f;
  f.kind_ = TensorKind::closed_form;
  f.dim_ = dim;
  f.eval_ = [shape = std::move(shape), radius = std::move(radius),
             normalization = std::move(normalization)](const Vec& x) {
    return tensor_closed_form(shape(x), radius(x), normalization(x));
  };
  return f;
}

TensorField TensorField::epsilon(std::shared_ptr<const EpsGraph> graph) {
  if (!graph || graph->num_nodes() == 0) throw std::invalid_argument("epsilon tensor needs a nonempty graph");
  TensorField f;
  f.kind_ = TensorKind::epsilon_tensor;
  f.dim_ = graph->dim();
  f.eval_ = [graph = std::move(graph)](const Vec& x) {
    Eigen::Index best = 0;
    (graph->nodes().colwise() - x).colwise().squaredNorm().minCoeff(&best);
    return tensor_eps(*graph, static_cast<std::size_t>(best));
  };
  return f;
}

Mat TensorField::operator()(const Vec& x) const { return eval_(x); }

TensorField TensorField::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("tensor scale factor must be positive");
  TensorField f = *this;
  if (kind_ == TensorKind::constant) {
    f.constant_ = factor * constant_;
    f.eval_ = [value = f.constant_](const Vec&) { return value; };
  } else {
    f.eval_ = [inner = eval_, factor](const Vec& x) -> Mat { return factor * inner(x); };
  }
  return f;
}

// ---------------------------------------------------------------------------
// d_T distance

double dT_distance(const TensorField& tensor, const Vec& x, const Vec& y,
                   const DistanceOptions& options) {
  if (x.size() != tensor.dim() || y.size() != tensor.dim()) {
    throw std::invalid_argument("point dimension does not match tensor field");
  }
  const Vec diff = y - x;
  if (tensor.is_constant()) {
    return std::sqrt(diff.dot(tensor.constant_value().ldlt().solve(diff)));
  }
  if (diff.norm() == 0.0) return 0.0;

  // Auxiliary lattice containing x and y as nodes, padded by a quarter of the
  // step count on every side.
  const int d = tensor.dim();
  const int steps = std::max(options.steps, 2);
  const double span = diff.cwiseAbs().maxCoeff();
  Vec h(d);
  std::vector<int> count(static_cast<std::size_t>(d));
  std::vector<int> start(static_cast<std::size_t>(d));
  std::vector<int> goal(static_cast<std::size_t>(d));
  const int pad = std::max(steps / 4, 1);
  for (int a = 0; a < d; ++a) {
    const int along = std::abs(diff[a]) > 0.0
                          ? std::max(1, static_cast<int>(std::lround(steps * std::abs(diff[a]) / span)))
                          : 0;
    h[a] = along > 0 ? std::abs(diff[a]) / along : span / steps;
    count[static_cast<std::size_t>(a)] = along + 2 * pad + 1;
    start[static_cast<std::size_t>(a)] = diff[a] >= 0.0 ? pad : pad + along;
    goal[static_cast<std::size_t>(a)] = diff[a] >= 0.0 ? pad + along : pad;
  }
  Vec origin(d);
  for (int a = 0; a < d; ++a) origin[a] = x[a] - start[static_cast<std::size_t>(a)] * h[a];

  std::size_t total = 1;
  for (int c : count) total *= static_cast<std::size_t>(c);
  auto flatten = [&](const std::vector<int>& idx) {
    std::size_t p = 0;
    for (int a = d - 1; a >= 0; --a) p = p * static_cast<std::size_t>(count[static_cast<std::size_t>(a)]) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
    return p;
  };
  auto unflatten = [&](std::size_t p) {
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) {
      idx[static_cast<std::size_t>(a)] = static_cast<int>(p % static_cast<std::size_t>(count[static_cast<std::size_t>(a)]));
      p /= static_cast<std::size_t>(count[static_cast<std::size_t>(a)]);
    }
    return idx;
  };
  auto position = [&](const std::vector<int>& idx) {
    Vec p(d);
    for (int a = 0; a < d; ++a) p[a] = origin[a] + idx[static_cast<std::size_t>(a)] * h[a];
    return p;
  };

  std::vector<double> dist(total, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  const std::size_t src = flatten(start);
  const std::size_t dst = flatten(goal);
  dist[src] = 0.0;
  queue.emplace(0.0, src);
  while (!queue.empty()) {
    const auto [du, u] = queue.top();
    queue.pop();
    if (du > dist[u]) continue;
    if (u == dst) return du;
    const auto iu = unflatten(u);
    const Vec pu = position(iu);
    std::vector<int> off(static_cast<std::size_t>(d), -1);
    while (true) {
      bool zero = true;
      bool inside = true;
      std::vector<int> iv(iu);
      for (int a = 0; a < d; ++a) {
        const auto sa = static_cast<std::size_t>(a);
        iv[sa] += off[sa];
        zero = zero && off[sa] == 0;
        inside = inside && iv[sa] >= 0 && iv[sa] < count[sa];
      }
      if (!zero && inside) {
        const Vec pv = position(iv);
        const Vec step = pv - pu;
        const Mat T = tensor(0.5 * (pu + pv));
        const double cost = std::sqrt(step.dot(T.ldlt().solve(step)));
        const std::size_t v = flatten(iv);
        if (du + cost < dist[v]) {
          dist[v] = du + cost;
          queue.emplace(dist[v], v);
        }
      }
      int a = 0;
      while (a < d && off[static_cast<std::size_t>(a)] == 1) off[static_cast<std::size_t>(a++)] = -1;
      if (a == d) break;
      ++off[static_cast<std::size_t>(a)];
    }
  }
  return dist[dst];
}

// ---------------------------------------------------------------------------
// Assumption validation

bool AssumptionReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

const AssumptionCheck* AssumptionReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

AssumptionReport validate_assumptions(const ConnectivitySpec& spec, const BaseMeasureSpec& base,
                                      const SamplePlan& plan) {
  const int d = spec.dim();
  AssumptionReport report;
  report.C_supp = spec.support_radius();

  const int res = std::max(plan.w_resolution, 2);
  const double box = plan.w_box > 0.0 ? plan.w_box : 1.5 * spec.support_radius();
  const double dw = 2.0 * box / res;
  const double cell = std::pow(dw, d);

  std::vector<Vec> ws;
  {
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      Vec w(d);
      for (int a = 0; a < d; ++a) w[a] = -box + (idx[static_cast<std::size_t>(a)] + 0.5) * dw;
      ws.push_back(w);
      int a = 0;
      while (a < d && idx[static_cast<std::size_t>(a)] == res - 1) idx[static_cast<std::size_t>(a++)] = 0;
      if (a == d) break;
      ++idx[static_cast<std::size_t>(a)];
    }
  }

  double asym = 0.0;
  double support = 0.0;
  double mom = 0.0;
  double nd = std::numeric_limits<double>::infinity();
  double theta_lip = 0.0;
  for (std::size_t zi = 0; zi < plan.z_points.size(); ++zi) {
    const Vec& z = plan.z_points[zi];
    Mat second = Mat::Zero(d, d);
    for (const Vec& w : ws) {
      const double th = spec(z, w);
      const double th_neg = spec(z, Vec(-w));
      asym = std::max(asym, std::abs(th - th_neg));
      if (th > 0.0) {
        support = std::max(support, w.norm());
        mom = std::max(mom, w.squaredNorm() * th);
        second.noalias() += th * cell * (w * w.transpose());
      }
      if (zi > 0) {
        const double dz = (z - plan.z_points[zi - 1]).norm();
        if (dz > 0.0) theta_lip = std::max(theta_lip, std::abs(th - spec(plan.z_points[zi - 1], w)) / dz);
      }
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(second);
    nd = std::min(nd, es.eigenvalues().minCoeff());
  }
  if (plan.z_points.empty()) nd = 0.0;

  double c_mu = std::numeric_limits<double>::infinity();
  double C_mu = 0.0;
  double mu_lip = 0.0;
  for (std::size_t k = 0; k < plan.x_points.size(); ++k) {
    const double v = base.density(plan.x_points[k]);
    c_mu = std::min(c_mu, v);
    C_mu = std::max(C_mu, v);
    if (k > 0) {
      const double dx = (plan.x_points[k] - plan.x_points[k - 1]).norm();
      if (dx > 0.0) mu_lip = std::max(mu_lip, std::abs(v - base.density(plan.x_points[k - 1])) / dx);
    }
  }
  if (plan.x_points.empty()) c_mu = 0.0;

  report.empirical_support = support;
  report.C_mom = mom;
  report.c_nd = nd;
  report.c_mu = c_mu;
  report.C_mu = C_mu;
  report.C_meas = unit_ball_volume(d) * std::pow(report.C_supp, d);
  report.C_int = C_mu * mom * report.C_meas;
  report.lipschitz_mu = mu_lip;
  report.lipschitz_theta = theta_lip;

  auto add = [&](std::string name, double value, bool passed, std::string detail) {
    report.checks.push_back({std::move(name), value, passed, std::move(detail)});
  };
  add("theta1_symmetry", asym, asym <= 1e-12, "max |theta(z,w) - theta(z,-w)|");
  add("theta2_continuity_in_z", theta_lip, std::isfinite(theta_lip), "sampled Lipschitz surrogate for omega_theta");
  add("theta3_support", support, support <= report.C_supp * (1.0 + 1e-12),
      "max |w| with theta > 0 must not exceed declared C_supp");
  add("theta4_moment", mom, std::isfinite(mom), "sup |w|^2 theta(z,w)");
  add("theta5_nondegeneracy", nd, nd > 0.0, "min eigenvalue of int w w^T theta(z,w) dw");
  add("mu1_continuity", mu_lip, std::isfinite(mu_lip), "sampled Lipschitz surrogate for omega_mu");
  add("mu2_bounds", c_mu, c_mu > 0.0 && std::isfinite(C_mu),
      "requires 0 < c_mu <= mu~ <= C_mu < inf on the sample");
  add("declared_mu_bounds", c_mu, c_mu >= base.lower_bound - 1e-12 && C_mu <= base.upper_bound + 1e-12,
      "sampled mu~ within the declared [c_mu, C_mu]");
  return report;
}

// ---------------------------------------------------------------------------
// Text I/O

void write_graph(std::ostream& out, const EpsGraph& graph) {
  const auto old_precision = out.precision();
  out.precision(17);
  out << "# epsgraph d=" << graph.dim() << " eps=" << graph.eps() << " n=" << graph.num_nodes() << '\n';
  const auto mu = graph.mu();
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    out << "v " << i;
    for (int a = 0; a < graph.dim(); ++a) out << ' ' << graph.nodes()(a, static_cast<Eigen::Index>(i));
    out << ' ' << mu[i] << '\n';
  }
  for (const auto& e : graph.undirected_edges()) out << "e " << e.i << ' ' << e.j << ' ' << e.eta << '\n';
  out.precision(old_precision);
}

EpsGraph read_graph(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty graph file");
  int d = 0;
  double eps = 0.0;
  std::size_t n = 0;
  {
    std::istringstream head(line);
    std::string hash, tag;
    head >> hash >> tag;
    if (hash != "#" || tag != "epsgraph") throw std::invalid_argument("missing '# epsgraph' header");
    std::string kv;
    while (head >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("malformed header field: " + kv);
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "d") d = std::stoi(val);
      else if (key == "eps") eps = std::stod(val);
      else if (key == "n") n = std::stoul(val);
    }
  }
  if (d < 1) throw std::invalid_argument("graph header has invalid dimension");
  PointSet nodes(d, static_cast<Eigen::Index>(n));
  std::vector<double> mu(n, 0.0);
  std::vector<bool> seen(n, false);
  std::vector<UndirectedEdge> edges;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    char tag = 0;
    row >> tag;
    if (tag == 'v') {
      std::size_t id = 0;
      row >> id;
      if (id >= n) throw std::invalid_argument("node id out of range: " + line);
      for (int a = 0; a < d; ++a) row >> nodes(a, static_cast<Eigen::Index>(id));
      row >> mu[id];
      if (!row) throw std::invalid_argument("malformed node line: " + line);
      seen[id] = true;
    } else if (tag == 'e') {
      UndirectedEdge e;
      row >> e.i >> e.j >> e.eta;
      if (!row) throw std::invalid_argument("malformed edge line: " + line);
      edges.push_back(e);
    } else {
      throw std::invalid_argument("unknown record: " + line);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("graph file is missing node records");
  }
  return EpsGraph(eps, std::move(nodes), std::move(mu), std::move(edges));
}

}  // namespace nlie
