#include "nlie/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nlie {

double CellVectorFlux::total_variation() const {
  double tv = 0.0;
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) tv += vectors.col(c).norm();
  return tv;
}

CellVectorFlux CellVectorFlux::operator+(const CellVectorFlux& other) const {
  if (other.vectors.rows() != vectors.rows() || other.vectors.cols() != vectors.cols()) {
    throw std::invalid_argument("cell flux grids differ");
  }
  return {grid, vectors + other.vectors};
}

void CellVectorFlux::write_csv(std::ostream& out) const {
  const int d = grid.dim();
  out << "cell_id";
  for (int a = 0; a < d; ++a) out << ",x" << a + 1;
  for (int a = 0; a < d; ++a) out << ",v" << a + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    const Vec x = grid.center(c);
    out << c;
    for (int a = 0; a < d; ++a) out << ',' << x[a];
    for (int a = 0; a < d; ++a) out << ',' << vectors(a, static_cast<Eigen::Index>(c));
    out << '\n';
  }
}

namespace {

// Cell containing x, with points on the outer boundary assigned to the
// adjacent boundary cell.
std::size_t clamped_cell(const CellGrid& grid, const Vec& x) {
  std::vector<std::size_t> idx(grid.counts.size());
  for (int a = 0; a < grid.dim(); ++a) {
    const auto n = static_cast<double>(grid.counts[static_cast<std::size_t>(a)]);
    const double t = std::clamp(std::floor((x[a] - grid.lower[a]) / grid.h), 0.0, n - 1.0);
    idx[static_cast<std::size_t>(a)] = static_cast<std::size_t>(t);
  }
  return grid.linear_index(idx);
}

bool inside(const CellGrid& grid, const Vec& x) {
  const double tol = 1e-12 * grid.h;
  const Vec hi = grid.upper();
  for (int a = 0; a < grid.dim(); ++a) {
    if (x[a] < grid.lower[a] - tol || x[a] > hi[a] + tol) return false;
  }
  return true;
}

// Adds weight * (length of [p, q] inside each cell) to `out` along `direction`.
void deposit_segment(const CellGrid& grid, const Vec& p, const Vec& q, const Vec& direction, double weight,
                     Mat& out) {
  const Vec diff = q - p;
  const double length = diff.norm();
  std::vector<double> cuts{0.0, 1.0};
  for (int a = 0; a < grid.dim(); ++a) {
    if (diff[a] == 0.0) continue;
    const double lo = std::min(p[a], q[a]);
    const double hi = std::max(p[a], q[a]);
    const double first = std::ceil((lo - grid.lower[a]) / grid.h);
    for (double k = first;; k += 1.0) {
      const double plane = grid.lower[a] + k * grid.h;
      if (plane > hi) break;
      const double t = (plane - p[a]) / diff[a];
      if (t > 0.0 && t < 1.0) cuts.push_back(t);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double span = cuts[k + 1] - cuts[k];
    if (span <= 0.0) continue;
    const Vec mid = p + (0.5 * (cuts[k] + cuts[k + 1])) * diff;
    out.col(static_cast<Eigen::Index>(clamped_cell(grid, mid))) += (weight * span * length) * direction;
  }
}

}  // namespace

CellVectorFlux reconstruct_local_flux(const EdgeField& j, const EpsGraph& graph, const CellGrid& grid) {
  if (j.size() != graph.num_directed_edges()) throw std::invalid_argument("edge field does not match graph");
  if (grid.dim() != graph.dim()) throw std::invalid_argument("grid dimension does not match graph");
  CellVectorFlux out{grid, Mat::Zero(grid.dim(), static_cast<Eigen::Index>(grid.num_cells()))};
  for (std::size_t s = 0; s < j.size(); ++s) {
    if (j[s] == 0.0) continue;
    const std::size_t a = graph.source(s);
    const std::size_t b = graph.target(s);
    const Vec p = graph.node(a);
    const Vec q = graph.node(b);
    if (!inside(grid, p) || !inside(grid, q)) {
      std::ostringstream msg;
      msg << "edge (" << a << "," << b << ") leaves the reconstruction grid";
      throw std::out_of_range(msg.str());
    }
    const Vec nu = (q - p).normalized();
    deposit_segment(grid, p, q, nu, 0.5 * graph.eta(s) * j[s], out.vectors);
  }
  return out;
}

double needle_mass(const EdgeField& j, const EpsGraph& graph) {
  if (j.size() != graph.num_directed_edges()) throw std::invalid_argument("edge field does not match graph");
  double acc = 0.0;
  for (std::size_t s = 0; s < j.size(); ++s) {
    acc += (graph.node(graph.target(s)) - graph.node(graph.source(s))).norm() * graph.eta(s) * std::abs(j[s]);
  }
  return 0.5 * acc;
}

// ---------------------------------------------------------------------------
// Test functions

TestFunction TestFunction::linear(const Vec& a) {
  std::ostringstream label;
  label << "linear(" << a.transpose() << ")";
  return {label.str(), [a](const Vec& x) { return a.dot(x); }, [a](const Vec&) -> Vec { return a; }};
}

TestFunction TestFunction::quadratic(const Mat& H, const Vec& b) {
  const Mat S = 0.5 * (H + H.transpose());
  return {"quadratic", [S, b](const Vec& x) { return 0.5 * x.dot(S * x) + b.dot(x); },
          [S, b](const Vec& x) -> Vec { return S * x + b; }};
}

TestFunction TestFunction::bump(const Vec& center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("bump radius must be positive");
  auto factor = [radius](double s) {
    const double u = s / radius;
    return std::abs(u) < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
  };
  auto dfactor = [radius](double s) {
    const double u = s / radius;
    return std::abs(u) < 1.0 ? -4.0 * u * (1.0 - u * u) / radius : 0.0;
  };
  std::ostringstream label;
  label << "bump(r=" << radius << ")";
  return {label.str(),
          [center, factor](const Vec& x) {
            double v = 1.0;
            for (Eigen::Index a = 0; a < x.size(); ++a) v *= factor(x[a] - center[a]);
            return v;
          },
          [center, factor, dfactor](const Vec& x) -> Vec {
            Vec g(x.size());
            for (Eigen::Index a = 0; a < x.size(); ++a) {
              double v = dfactor(x[a] - center[a]);
              for (Eigen::Index b = 0; b < x.size(); ++b) {
                if (b != a) v *= factor(x[b] - center[b]);
              }
              g[a] = v;
            }
            return g;
          }};
}

TestFunction TestFunction::trigonometric(const Vec& k, double phase) {
  std::ostringstream label;
  label << "sin(" << k.transpose() << ")";
  return {label.str(), [k, phase](const Vec& x) { return std::sin(k.dot(x) + phase); },
          [k, phase](const Vec& x) -> Vec { return std::cos(k.dot(x) + phase) * k; }};
}

std::vector<TestFunction> linear_family(int dim) {
  std::vector<TestFunction> out;
  for (int a = 0; a < dim; ++a) out.push_back(TestFunction::linear(Vec::Unit(dim, a)));
  out.push_back(TestFunction::linear(Vec::LinSpaced(dim, 0.7, -1.3)));
  return out;
}

std::vector<TestFunction> quadratic_family(int dim) {
  std::vector<TestFunction> out;
  out.push_back(TestFunction::quadratic(Mat::Identity(dim, dim), Vec::Zero(dim)));
  Mat H = Mat::Constant(dim, dim, 0.3);
  H.diagonal() = Vec::LinSpaced(dim, 1.0, 2.0);
  out.push_back(TestFunction::quadratic(H, Vec::LinSpaced(dim, 0.5, -0.5)));
  return out;
}

std::vector<TestFunction> bump_family(int dim) {
  return {TestFunction::bump(Vec::Zero(dim), 1.0), TestFunction::bump(Vec::Constant(dim, 0.4), 0.8)};
}

std::vector<TestFunction> trigonometric_family(int dim) {
  return {TestFunction::trigonometric(Vec::Constant(dim, 1.0)),
          TestFunction::trigonometric(Vec::LinSpaced(dim, 2.0, 0.5), 0.3)};
}

std::vector<double> divergence_identity_errors(const EdgeField& j, const EpsGraph& graph, const CellVectorFlux& jhat,
                                               const std::vector<TestFunction>& tests) {
  if (j.size() != graph.num_directed_edges()) throw std::invalid_argument("edge field does not match graph");
  const PointSet centers = jhat.grid.centers();
  std::vector<double> errors;
  errors.reserve(tests.size());
  for (const TestFunction& phi : tests) {
    std::vector<double> values(graph.num_nodes());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = phi.value(graph.node(i));
    double edge_sum = 0.0;
    for (std::size_t s = 0; s < j.size(); ++s) {
      if (j[s] == 0.0) continue;
      edge_sum += (values[graph.target(s)] - values[graph.source(s)]) * graph.eta(s) * j[s];
    }
    edge_sum *= 0.5;
    double cell_sum = 0.0;
    for (Eigen::Index c = 0; c < jhat.vectors.cols(); ++c) {
      if (jhat.vectors.col(c).squaredNorm() == 0.0) continue;
      cell_sum += phi.gradient(centers.col(c)).dot(jhat.vectors.col(c));
    }
    errors.push_back(std::abs(edge_sum - cell_sum));
  }
  return errors;
}

double divergence_identity_check(const EdgeField& j, const EpsGraph& graph, const CellVectorFlux& jhat,
                                 const std::vector<TestFunction>& tests) {
  const std::vector<double> errors = divergence_identity_errors(j, graph, jhat, tests);
  return errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
}

}  // namespace nlie
