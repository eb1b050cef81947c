#include "nlie/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

namespace nlie {

using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& what) { throw ConfigError("config: " + what); }

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) config_fail(std::string("missing key '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) config_fail(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

double number_or(const json& j, const char* key, double fallback) {
  return j.is_object() && j.contains(key) ? number(j, key) : fallback;
}

Vec vector_of(const json& v, int dim, const char* what) {
  if (!v.is_array() || static_cast<int>(v.size()) != dim) {
    config_fail(std::string("'") + what + "' must be an array of " + std::to_string(dim) + " numbers");
  }
  Vec out(dim);
  for (int a = 0; a < dim; ++a) {
    if (!v[static_cast<std::size_t>(a)].is_number()) config_fail(std::string("'") + what + "' must hold numbers");
    out[a] = v[static_cast<std::size_t>(a)].get<double>();
  }
  return out;
}

Mat matrix_of(const json& v, int dim, const char* what) {
  if (!v.is_array() || static_cast<int>(v.size()) != dim) config_fail(std::string("'") + what + "' must be a d x d array");
  Mat m(dim, dim);
  for (int r = 0; r < dim; ++r) m.row(r) = vector_of(v[static_cast<std::size_t>(r)], dim, what).transpose();
  return m;
}

std::string type_of(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    config_fail(std::string("'") + what + "' needs a string 'type'");
  }
  return j["type"].get<std::string>();
}

std::vector<std::size_t> lattice_counts(const Vec& lo, const Vec& hi, double h) {
  std::vector<std::size_t> counts;
  for (Eigen::Index a = 0; a < lo.size(); ++a) {
    const double n = std::round((hi[a] - lo[a]) / h);
    counts.push_back(static_cast<std::size_t>(n) + 1);
  }
  return counts;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) config_fail("top level must be an object");
  ExperimentConfig c;
  c.raw = j;
  const json& dim = require(j, "dimension");
  if (!dim.is_number_integer() || dim.get<int>() < 1 || dim.get<int>() > 3) config_fail("'dimension' must be 1, 2 or 3");
  c.dimension = dim.get<int>();

  const json& box = require(j, "box");
  c.box_lower = vector_of(require(box, "lower"), c.dimension, "box.lower");
  c.box_upper = vector_of(require(box, "upper"), c.dimension, "box.upper");
  c.h = number(j, "h");

  const json& eps = require(j, "eps_list");
  if (!eps.is_array() || eps.empty()) config_fail("'eps_list' must be a nonempty array");
  for (const json& e : eps) {
    if (!e.is_number()) config_fail("'eps_list' must hold numbers");
    c.eps_list.push_back(e.get<double>());
  }

  c.connectivity = require(j, "connectivity");
  c.base_density = require(j, "base_density");
  c.kernel = require(j, "kernel");
  c.initial = j.contains("initial") ? j["initial"] : json{{"type", "uniform"}};
  c.t_end = number(j, "t_end");

  const json& dt = require(j, "dt");
  const std::string policy = dt.is_object() && dt.contains("policy") && dt["policy"].is_string()
                                 ? dt["policy"].get<std::string>()
                                 : std::string();
  if (policy == "fixed") {
    c.dt = DtPolicy::fixed(number(dt, "value"));
    c.dt.dt_max = number_or(dt, "dt_max", kDefaultDtMax);
  } else if (policy == "adaptive") {
    c.dt = DtPolicy::adaptive(number_or(dt, "safety", 0.5), number_or(dt, "dt_max", kDefaultDtMax));
  } else {
    config_fail("'dt.policy' must be \"fixed\" or \"adaptive\"");
  }

  const json& snaps = require(j, "snapshots");
  const json* times = &snaps;
  if (snaps.is_object()) {
    times = &require(snaps, "times");
    if (snaps.contains("stride")) {
      if (!snaps["stride"].is_number_integer() || snaps["stride"].get<long>() < 1) {
        config_fail("'snapshots.stride' must be a positive integer");
      }
      c.snapshot_stride = snaps["stride"].get<std::size_t>();
    }
  }
  if (!times->is_array()) config_fail("'snapshots' must be an array of times or {times, stride}");
  for (const json& t : *times) {
    if (!t.is_number()) config_fail("snapshot times must be numbers");
    c.snapshot_times.push_back(t.get<double>());
  }

  const json& out = require(j, "out_dir");
  if (!out.is_string()) config_fail("'out_dir' must be a string");
  c.out_dir = out.get<std::string>();
  const json& seed = require(j, "seed");
  if (!seed.is_number_integer() || seed.get<long long>() < 0) config_fail("'seed' must be a nonnegative integer");
  c.seed = seed.get<std::uint64_t>();

  if (j.contains("coupling")) {
    const std::string cp = j["coupling"].is_string() ? j["coupling"].get<std::string>() : "";
    if (cp == "fixed") c.coupling = GridCoupling::fixed;
    else if (cp == "refine") c.coupling = GridCoupling::refine;
    else config_fail("'coupling' must be \"fixed\" or \"refine\"");
  }
  c.local_h = number_or(j, "local_h", 0.0);
  if (j.contains("tensor_resolution")) {
    if (!j["tensor_resolution"].is_number_integer()) config_fail("'tensor_resolution' must be an integer");
    c.tensor_resolution = j["tensor_resolution"].get<int>();
  }

  c.validate();
  // Surface bad component specs now rather than mid-run.
  c.make_connectivity();
  c.make_base();
  c.make_kernel();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    config_fail("'" + path + "' is not valid JSON (" + e.what() + ")");
  }
  return from_json(j);
}

void ExperimentConfig::validate() const {
  if (!(h > 0.0)) config_fail("'h' must be positive");
  for (int a = 0; a < dimension; ++a) {
    if (!(box_upper[a] > box_lower[a])) config_fail("box.upper must exceed box.lower on every axis");
  }
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0)) config_fail("eps values must be positive");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1])) config_fail("'eps_list' must be strictly decreasing");
    if (graph_spacing(eps_list[k]) > eps_list[k] / 4.0 * (1.0 + 1e-12)) {
      config_fail("grid spacing " + fmt(graph_spacing(eps_list[k])) + " exceeds eps/4 for eps = " + fmt(eps_list[k]));
    }
  }
  if (!(t_end >= 0.0)) config_fail("'t_end' must be nonnegative");
  for (double t : snapshot_times) {
    if (!(t >= 0.0 && t <= t_end)) config_fail("snapshot times must lie in [0, t_end]");
  }
  if (local_h < 0.0) config_fail("'local_h' must be nonnegative");
  if (dt.kind == DtPolicy::Kind::fixed && !(dt.value > 0.0)) config_fail("fixed dt must be positive");
  if (dt.kind == DtPolicy::Kind::adaptive && !(dt.value > 0.0 && dt.value <= 1.0)) {
    config_fail("CFL safety must lie in (0, 1]");
  }
}

std::string ExperimentConfig::hash() const {
  const std::string text = raw.dump();
  std::uint64_t hv = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    hv ^= ch;
    hv *= 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << hv;
  return s.str();
}

double ExperimentConfig::graph_spacing(double eps) const {
  if (coupling == GridCoupling::fixed || eps_list.empty()) return h;
  const double r = eps / eps_list.front();
  return h * r * r;
}

double ExperimentConfig::reference_spacing() const {
  if (local_h > 0.0) return local_h;
  return eps_list.empty() ? h : graph_spacing(eps_list.back());
}

int ExperimentConfig::quadrature_resolution() const {
  if (tensor_resolution > 0) return tensor_resolution;
  return dimension == 1 ? 2000 : 200;
}

ConnectivitySpec ExperimentConfig::make_connectivity() const {
  const std::string type = type_of(connectivity, "connectivity");
  if (type == "ball") {
    const double radius = number_or(connectivity, "radius", 1.0);
    const double value = number_or(connectivity, "value", 1.0);
    if (!(radius > 0.0) || !(value > 0.0)) config_fail("ball radius and value must be positive");
    return ConnectivitySpec::ball(dimension, radius, value);
  }
  if (type == "anisotropic") {
    const Mat shape = matrix_of(require(connectivity, "shape"), dimension, "connectivity.shape");
    const double radius = number_or(connectivity, "radius", 1.0);
    Eigen::SelfAdjointEigenSolver<Mat> eig(shape);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) config_fail("connectivity.shape must be positive definite");
    double norm = 0.0;
    const json& nj = require(connectivity, "normalization");
    if (nj.is_string() && nj.get<std::string>() == "identity") norm = identity_normalization(shape, radius);
    else if (nj.is_number()) norm = nj.get<double>();
    else config_fail("connectivity.normalization must be a number or \"identity\"");
    const double support = radius * std::sqrt(eig.eigenvalues().maxCoeff());
    return ConnectivitySpec::anisotropic(
        dimension, [shape](const Vec&) { return shape; }, [radius](const Vec&) { return radius; },
        [norm](const Vec&) { return norm; }, support);
  }
  config_fail("unknown connectivity type '" + type + "'");
}

BaseMeasureSpec ExperimentConfig::make_base() const {
  const std::string type = type_of(base_density, "base_density");
  const double value = number_or(base_density, "value", 1.0);
  if (!(value > 0.0)) config_fail("base_density.value must be positive");
  if (type == "uniform") return BaseMeasureSpec::uniform(value);
  if (type == "sine") {
    const double amp = number_or(base_density, "amplitude", 0.4);
    const double freq = number_or(base_density, "frequency", 1.0);
    if (!(std::abs(amp) < 1.0)) config_fail("base_density.amplitude must lie in (-1, 1)");
    BaseMeasureSpec b;
    b.density = [value, amp, freq](const Vec& x) { return value * (1.0 + amp * std::sin(freq * x[0])); };
    b.lower_bound = value * (1.0 - std::abs(amp));
    b.upper_bound = value * (1.0 + std::abs(amp));
    return b;
  }
  config_fail("unknown base_density type '" + type + "'");
}

InteractionKernel ExperimentConfig::make_kernel() const {
  const std::string type = type_of(kernel, "kernel");
  InteractionKernel k;
  if (type == "quadratic") {
    k = InteractionKernel::quadratic_attractive();
  } else if (type == "gaussian") {
    const double width = number(kernel, "width");
    if (!(width > 0.0)) config_fail("kernel.width must be positive");
    k = InteractionKernel::gaussian(width, number_or(kernel, "strength", 1.0));
  } else if (type == "zero") {
    k = InteractionKernel::zero();
  } else {
    config_fail("unknown kernel type '" + type + "'");
  }
  const double scale = number_or(kernel, "scale", 1.0);
  if (scale != 1.0) k = k.scaled(scale);
  if (kernel.contains("potential")) {
    const json& p = kernel["potential"];
    if (type_of(p, "kernel.potential") != "quadratic") config_fail("only quadratic potentials are supported");
    const double c = number_or(p, "strength", 1.0);
    k = k.with_potential([c](PointRef x) { return 0.5 * c * x.squaredNorm(); },
                         [c](PointRef x) -> Vec { return c * x; });
  }
  return k;
}

std::shared_ptr<const EpsGraph> ExperimentConfig::make_graph(double eps) const {
  const double hg = graph_spacing(eps);
  const PointSet nodes = lattice_points(box_lower, hg, lattice_counts(box_lower, box_upper, hg));
  return std::make_shared<const EpsGraph>(
      build_graph(nodes, make_base(), make_connectivity(), eps, std::pow(hg, dimension)));
}

NodeMeasure ExperimentConfig::initial_measure(const PointSet& points) const {
  const std::string type = type_of(initial, "initial");
  const BaseMeasureSpec base = make_base();
  std::function<double(const Vec&)> f;
  if (type == "uniform") {
    const Vec lo = initial.contains("lower") ? vector_of(initial["lower"], dimension, "initial.lower") : box_lower;
    const Vec hi = initial.contains("upper") ? vector_of(initial["upper"], dimension, "initial.upper") : box_upper;
    f = [lo, hi](const Vec& x) {
      for (Eigen::Index a = 0; a < x.size(); ++a) {
        if (x[a] < lo[a] - 1e-12 || x[a] > hi[a] + 1e-12) return 0.0;
      }
      return 1.0;
    };
  } else if (type == "bumps") {
    const json& centers = require(initial, "centers");
    const json& widths = require(initial, "widths");
    const json& weights = require(initial, "weights");
    if (!centers.is_array() || !widths.is_array() || !weights.is_array() || centers.size() != widths.size() ||
        centers.size() != weights.size() || centers.empty()) {
      config_fail("initial bumps need equal-length centers, widths and weights");
    }
    std::vector<Vec> c;
    std::vector<double> w, s;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      c.push_back(vector_of(centers[k], dimension, "initial.centers"));
      s.push_back(widths[k].get<double>());
      w.push_back(weights[k].get<double>());
      if (!(s.back() > 0.0) || !(w.back() >= 0.0)) config_fail("bump widths must be positive, weights nonnegative");
    }
    f = [c, s, w](const Vec& x) {
      double v = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) v += w[k] * std::exp(-(x - c[k]).squaredNorm() / s[k]);
      return v;
    };
  } else if (type == "gaussian") {
    const Vec center = initial.contains("center") ? vector_of(initial["center"], dimension, "initial.center")
                                                  : Vec::Zero(dimension);
    const double var = number_or(initial, "variance", 0.25);
    const double cut = number_or(initial, "cutoff", 1.0);
    if (!(var > 0.0) || !(cut > 0.0)) config_fail("initial gaussian variance and cutoff must be positive");
    f = [center, var, cut](const Vec& x) {
      const double r2 = (x - center).squaredNorm();
      return r2 <= cut * cut ? std::exp(-r2 / (2.0 * var)) : 0.0;
    };
  } else if (type == "masses") {
    const json& m = require(initial, "values");
    if (!m.is_array() || m.size() != static_cast<std::size_t>(points.cols())) {
      config_fail("initial.values must list one mass per node (" + std::to_string(points.cols()) + ")");
    }
    std::vector<double> vals;
    for (const json& v : m) vals.push_back(v.get<double>());
    try {
      return NodeMeasure(std::move(vals)).normalized();
    } catch (const std::invalid_argument& e) {
      config_fail(std::string("initial.values: ") + e.what());
    }
  } else {
    config_fail("unknown initial type '" + type + "'");
  }
  std::vector<double> m(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const Vec x = points.col(i);
    m[static_cast<std::size_t>(i)] = f(x) * base.density(x);
  }
  NodeMeasure out(std::move(m));
  if (!(out.total() > 0.0)) config_fail("initial datum has no mass on the grid");
  return out.normalized();
}

TensorField ExperimentConfig::limit_tensor() const {
  return TensorField::limit(make_connectivity(), make_base(), quadrature_resolution());
}

LocalState ExperimentConfig::make_local_state() const {
  const CellGrid grid = CellGrid::covering(box_lower, box_upper, reference_spacing());
  return LocalState(grid, initial_measure(grid.centers()), limit_tensor());
}

SolveOptions ExperimentConfig::solve_options(bool record_fluxes) const {
  SolveOptions o;
  o.dt = dt;
  o.snapshot_stride = snapshot_stride;
  o.stop_times = snapshot_times;
  o.record_fluxes = record_fluxes;
  return o;
}

// ---------------------------------------------------------------------------
// Counting measure and metrics

CountingMeasure riemann_counting_measure(const BaseMeasureSpec& base, int level, const Vec& lower, const Vec& upper) {
  if (level < 0) throw std::invalid_argument("level must be nonnegative");
  if (lower.size() != upper.size() || lower.size() == 0) throw std::invalid_argument("box dimension mismatch");
  const int d = static_cast<int>(lower.size());
  const double scale = std::ldexp(1.0, level);
  std::vector<long long> first(static_cast<std::size_t>(d));
  std::vector<std::size_t> counts(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    const auto lo = static_cast<long long>(std::ceil(lower[a] * scale));
    const auto hi = static_cast<long long>(std::ceil(upper[a] * scale));  // exclusive
    if (hi <= lo) throw std::invalid_argument("box contains no lattice point at this level");
    first[static_cast<std::size_t>(a)] = lo;
    counts[static_cast<std::size_t>(a)] = static_cast<std::size_t>(hi - lo);
  }
  Vec start(d);
  for (int a = 0; a < d; ++a) start[a] = static_cast<double>(first[static_cast<std::size_t>(a)]) / scale;
  CountingMeasure out;
  out.nodes = lattice_points(start, 1.0 / scale, counts);
  out.cell_volume = std::ldexp(1.0, -d * level);
  std::vector<double> w(static_cast<std::size_t>(out.nodes.cols()));
  for (Eigen::Index i = 0; i < out.nodes.cols(); ++i) {
    w[static_cast<std::size_t>(i)] = base.density(out.nodes.col(i)) * out.cell_volume;
  }
  out.weights = NodeMeasure(std::move(w));
  return out;
}

namespace {

void bounding_box(const PointSet& a, const PointSet& b, Vec& lo, Vec& hi) {
  lo = a.rowwise().minCoeff().cwiseMin(b.rowwise().minCoeff());
  hi = a.rowwise().maxCoeff().cwiseMax(b.rowwise().maxCoeff());
}

double smoothed_l1(const PointSet& xa, const NodeMeasure& a, const PointSet& xb, const NodeMeasure& b, double bw) {
  if (!(bw > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const int d = static_cast<int>(xa.rows());
  Vec lo, hi;
  bounding_box(xa, xb, lo, hi);
  lo.array() -= 4.0 * bw;
  hi.array() += 4.0 * bw;
  double step = bw / 4.0;
  auto total_points = [&](double s) {
    double n = 1.0;
    for (int k = 0; k < d; ++k) n *= std::ceil((hi[k] - lo[k]) / s);
    return n;
  };
  while (total_points(step) > 4e6) step *= 1.5;
  const CellGrid grid = CellGrid::covering(lo, hi, step);
  const double norm = std::pow(2.0 * M_PI * bw * bw, -0.5 * d);
  const double inv = 1.0 / (2.0 * bw * bw);
  const double cutoff2 = 36.0 * bw * bw;

  std::vector<double> diff(grid.num_cells(), 0.0);
  auto splat = [&](const PointSet& x, const NodeMeasure& m, double sign) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double mass = m[static_cast<std::size_t>(k)];
      if (mass == 0.0) continue;
      // Visit only cells within 6 bandwidths of the atom.
      std::vector<std::size_t> from(static_cast<std::size_t>(d)), to(static_cast<std::size_t>(d));
      for (int a = 0; a < d; ++a) {
        const double n = static_cast<double>(grid.counts[static_cast<std::size_t>(a)]);
        from[static_cast<std::size_t>(a)] =
            static_cast<std::size_t>(std::clamp(std::floor((x(a, k) - 6.0 * bw - lo[a]) / step), 0.0, n - 1.0));
        to[static_cast<std::size_t>(a)] =
            static_cast<std::size_t>(std::clamp(std::floor((x(a, k) + 6.0 * bw - lo[a]) / step), 0.0, n - 1.0));
      }
      std::vector<std::size_t> idx = from;
      while (true) {
        const std::size_t c = grid.linear_index(idx);
        const double r2 = (grid.center(c) - x.col(k)).squaredNorm();
        if (r2 <= cutoff2) diff[c] += sign * mass * norm * std::exp(-r2 * inv);
        int a = 0;
        for (; a < d; ++a) {
          if (++idx[static_cast<std::size_t>(a)] <= to[static_cast<std::size_t>(a)]) break;
          idx[static_cast<std::size_t>(a)] = from[static_cast<std::size_t>(a)];
        }
        if (a == d) break;
      }
    }
  };
  splat(xa, a, 1.0);
  splat(xb, b, -1.0);
  double l1 = 0.0;
  for (double v : diff) l1 += std::abs(v);
  return l1 * grid.cell_volume();
}

double bounded_lipschitz(const PointSet& xa, const NodeMeasure& a, const PointSet& xb, const NodeMeasure& b) {
  const int d = static_cast<int>(xa.rows());
  std::vector<Vec> directions;
  for (int k = 0; k < d; ++k) directions.push_back(Vec::Unit(d, k));
  for (int k = 0; k < d; ++k) {
    for (int l = k + 1; l < d; ++l) {
      Vec e = Vec::Zero(d);
      e[k] = e[l] = M_SQRT1_2;
      directions.push_back(e);
      e[l] = -M_SQRT1_2;
      directions.push_back(e);
    }
  }
  Vec lo, hi;
  bounding_box(xa, xb, lo, hi);
  const double reach = std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff()) * std::sqrt(double(d)) + 1.0;
  double best = 0.0;
  for (const Vec& e : directions) {
    // Offsets on a grid of step 1/16 that always contains 0.
    const long long n = static_cast<long long>(std::ceil(reach * 16.0));
    for (long long k = -n; k <= n; ++k) {
      const double c = static_cast<double>(k) / 16.0;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < xa.cols(); ++i) {
        acc += std::clamp(e.dot(xa.col(i)) - c, -1.0, 1.0) * a[static_cast<std::size_t>(i)];
      }
      for (Eigen::Index i = 0; i < xb.cols(); ++i) {
        acc -= std::clamp(e.dot(xb.col(i)) - c, -1.0, 1.0) * b[static_cast<std::size_t>(i)];
      }
      best = std::max(best, std::abs(acc));
    }
  }
  return best;
}

}  // namespace

double error_metric(const PointSet& xa, const NodeMeasure& a, const PointSet& xb, const NodeMeasure& b,
                    const MetricOptions& options) {
  if (xa.rows() != xb.rows()) throw std::invalid_argument("measures live in different dimensions");
  if (a.size() != static_cast<std::size_t>(xa.cols()) || b.size() != static_cast<std::size_t>(xb.cols())) {
    throw std::invalid_argument("measure does not match point count");
  }
  switch (options.kind) {
    case MetricKind::quantile_w2: {
      if (xa.rows() != 1) throw std::invalid_argument("quantile_w2 needs d = 1");
      // Compare the normalized measures; totals agree up to rounding.
      return wasserstein_T_small(xa, a.normalized(), xb, b.normalized(), TensorField::constant(Mat::Identity(1, 1)));
    }
    case MetricKind::smoothed_l1:
      return smoothed_l1(xa, a, xb, b, options.bandwidth);
    case MetricKind::bounded_lipschitz:
      return bounded_lipschitz(xa, a, xb, b);
  }
  throw std::invalid_argument("unknown metric");
}

// ---------------------------------------------------------------------------
// Sweep

double ConvergenceReport::error(double eps, std::size_t k) const {
  for (const SweepRow& r : rows) {
    if (r.eps == eps) return r.errors.at(k);
  }
  throw std::out_of_range("no row for eps = " + fmt(eps));
}

json ConvergenceReport::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["snapshot_times"] = snapshot_times;
  j["local_h"] = local_h;
  j["local_energy"] = local_energy;
  j["errors_decreasing"] = errors_decreasing;
  j["rows"] = json::array();
  for (const SweepRow& r : rows) {
    json row;
    row["eps"] = r.eps;
    row["h"] = r.h;
    row["nodes"] = r.nodes;
    row["steps"] = r.steps;
    row["errors"] = r.errors;
    row["energy_times"] = r.energy_times;
    row["energy"] = r.energy;
    row["de_giorgi"] = r.de_giorgi;
    row["dissipation_integral"] = r.dissipation_integral;
    row["max_legendre_gap"] = r.max_legendre_gap;
    row["max_chain_rule_residual"] = r.max_chain_rule_residual;
    row["mass_drift"] = r.mass_drift;
    row["min_mass"] = r.min_mass;
    j["rows"].push_back(row);
  }
  j["observed_order"] = json::array();
  for (const OrderEstimate& o : orders) {
    j["observed_order"].push_back({{"eps_coarse", o.eps_coarse}, {"eps_fine", o.eps_fine}, {"t", o.t}, {"order", o.order}});
  }
  return j;
}

namespace {

struct GraphRun {
  std::shared_ptr<const EpsGraph> graph;
  Trajectory traj;
  SweepRow row;
};

GraphRun run_graph(const ExperimentConfig& config, double eps) {
  GraphRun run;
  try {
    run.graph = config.make_graph(eps);
    const EpsGraph& g = *run.graph;
    const InteractionKernel kernel = config.make_kernel();
    const NodeMeasure rho0 = config.initial_measure(g.nodes());
    run.traj = solve_nl2ie(rho0, g, kernel, config.t_end, config.solve_options(true));
    const DissipationLedger ledger = dissipation_ledger(run.traj, kernel, g);

    SweepRow& row = run.row;
    row.eps = eps;
    row.h = config.graph_spacing(eps);
    row.nodes = g.num_nodes();
    row.steps = run.traj.fluxes.size();
    row.de_giorgi = ledger.de_giorgi;
    row.max_chain_rule_residual = ledger.max_chain_rule_residual;
    for (std::size_t k = 0; k < ledger.records.size(); ++k) {
      const double dt = run.traj.times[k + 1] - run.traj.times[k];
      row.dissipation_integral += dt * ledger.records[k].slope;
      row.max_legendre_gap = std::max(row.max_legendre_gap, ledger.records[k].legendre_gap);
    }
    row.min_mass = 1.0;
    for (std::size_t k = 0; k < run.traj.states.size(); ++k) {
      const NodeMeasure& s = run.traj.states[k];
      row.energy_times.push_back(run.traj.times[k]);
      row.energy.push_back(interaction_energy(kernel, g.nodes(), s));
      row.mass_drift = std::max(row.mass_drift, std::abs(s.total() - rho0.total()));
      for (double m : s.masses()) row.min_mass = std::min(row.min_mass, m);
    }
  } catch (const PreconditionError& e) {
    throw PreconditionError("eps = " + fmt(eps) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("eps = " + fmt(eps) + ": " + e.what());
  }
  return run;
}

void write_run(const std::filesystem::path& dir, const std::string& stem, const Trajectory& traj,
               const std::string& hash) {
  std::ofstream csv(dir / (stem + ".csv"));
  write_trajectory_csv(csv, traj);
  std::ofstream meta(dir / (stem + ".json"));
  write_trajectory_metadata(meta, traj, hash);
}

}  // namespace

ConvergenceReport run_convergence_sweep(const ExperimentConfig& config, bool write_files, SweepOutputs* outputs) {
  config.validate();
  const InteractionKernel kernel = config.make_kernel();

  std::vector<std::future<GraphRun>> pending;
  for (double eps : config.eps_list) {
    pending.push_back(std::async(std::launch::async, [&config, eps] { return run_graph(config, eps); }));
  }
  auto local_future = std::async(std::launch::async, [&config, &kernel] {
    try {
      return solve_nlie_local(config.make_local_state(), kernel, config.t_end, config.solve_options(false));
    } catch (const PreconditionError& e) {
      throw PreconditionError(std::string("local reference: ") + e.what());
    }
  });

  std::vector<GraphRun> runs;
  for (auto& f : pending) runs.push_back(f.get());
  Trajectory local = local_future.get();

  ConvergenceReport report;
  report.config_hash = config.hash();
  report.snapshot_times = config.snapshot_times;
  report.local_h = config.reference_spacing();
  for (const NodeMeasure& s : local.states) report.local_energy.push_back(interaction_energy(kernel, local.positions, s));

  MetricOptions metric;
  if (config.dimension == 1) {
    metric.kind = MetricKind::quantile_w2;
  } else {
    metric.kind = MetricKind::smoothed_l1;
    metric.bandwidth = 2.0 * config.h;
  }
  for (GraphRun& run : runs) {
    for (double t : config.snapshot_times) {
      run.row.errors.push_back(
          error_metric(run.traj.positions, run.traj.state_at(t), local.positions, local.state_at(t), metric));
    }
    report.rows.push_back(run.row);
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.eps > b.eps; });

  report.errors_decreasing = true;
  for (std::size_t r = 1; r < report.rows.size(); ++r) {
    for (std::size_t k = 0; k < config.snapshot_times.size(); ++k) {
      const double coarse = report.rows[r - 1].errors[k];
      const double fine = report.rows[r].errors[k];
      if (!(fine < coarse)) report.errors_decreasing = false;
      OrderEstimate o;
      o.eps_coarse = report.rows[r - 1].eps;
      o.eps_fine = report.rows[r].eps;
      o.t = config.snapshot_times[k];
      o.order = (coarse > 0.0 && fine > 0.0) ? std::log(coarse / fine) / std::log(o.eps_coarse / o.eps_fine)
                                             : std::numeric_limits<double>::quiet_NaN();
      report.orders.push_back(o);
    }
  }

  if (write_files) {
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    for (const GraphRun& run : runs) {
      const std::string stem = "graph_eps_" + fmt(run.row.eps);
      write_run(dir, stem, run.traj, report.config_hash);
      std::ofstream ledger(dir / (stem + "_ledger.csv"));
      dissipation_ledger(run.traj, kernel, *run.graph).write_csv(ledger);
    }
    write_run(dir, "local", local, report.config_hash);
    std::ofstream out(dir / "report.json");
    out << report.to_json().dump(2) << '\n';
  }

  if (outputs) {
    outputs->local = std::move(local);
    outputs->graph_runs.clear();
    outputs->graphs.clear();
    std::vector<GraphRun*> sorted;
    for (GraphRun& r : runs) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](const GraphRun* a, const GraphRun* b) { return a->row.eps > b->row.eps; });
    for (GraphRun* r : sorted) {
      outputs->graph_runs.push_back(std::move(r->traj));
      outputs->graphs.push_back(r->graph);
    }
  }
  return report;
}

}  // namespace nlie
