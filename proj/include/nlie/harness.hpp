#pragma once

// Experiment configuration, error metrics and the eps-sweep that compares
// graph runs against the local reference solver.

#include "nlie/dynamics.hpp"
#include "nlie/energetics.hpp"
#include "nlie/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlie {

/// Malformed or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// How the graph spacing follows eps: `fixed` uses h for every eps, `refine`
/// uses h * (eps / eps_max)^2 so that the neighbor count per axis doubles
/// each time eps halves.
enum class GridCoupling { fixed, refine };

struct ExperimentConfig {
  int dimension = 1;
  Vec box_lower;
  Vec box_upper;
  double h = 0.05;
  GridCoupling coupling = GridCoupling::fixed;
  double local_h = 0.0;  ///< 0 means the finest graph spacing
  std::vector<double> eps_list;
  nlohmann::json connectivity;
  nlohmann::json base_density;
  nlohmann::json kernel;
  nlohmann::json initial;
  double t_end = 1.0;
  DtPolicy dt = DtPolicy::adaptive();
  std::vector<double> snapshot_times;
  std::size_t snapshot_stride = 1;
  int tensor_resolution = 0;  ///< 0 means 2000 in d = 1, 200 otherwise
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  nlohmann::json raw;

  /// Keys: dimension, box, h, eps_list, connectivity, base_density, kernel,
  /// t_end, dt, snapshots, out_dir, seed; optional coupling, local_h,
  /// initial, tensor_resolution. Throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  /// Throws ConfigError unless every graph spacing is at most eps/4 and eps
  /// decreases strictly.
  void validate() const;

  /// 16 hex digits identifying the configuration.
  std::string hash() const;

  double graph_spacing(double eps) const;
  double reference_spacing() const;
  int quadrature_resolution() const;

  ConnectivitySpec make_connectivity() const;
  BaseMeasureSpec make_base() const;
  InteractionKernel make_kernel() const;
  /// Lattice on the closed box with spacing graph_spacing(eps).
  std::shared_ptr<const EpsGraph> make_graph(double eps) const;
  /// Initial datum f(x) mu~(x) sampled at `points` with weights `volume`, normalized.
  NodeMeasure initial_measure(const PointSet& points) const;
  TensorField limit_tensor() const;
  LocalState make_local_state() const;
  SolveOptions solve_options(bool record_fluxes) const;
};

struct CountingMeasure {
  PointSet nodes;
  NodeMeasure weights;
  double cell_volume = 0.0;
};

/// Nodes (Z^d / 2^n) cap [lower, upper), weights mu~(x) 2^{-dn}.
CountingMeasure riemann_counting_measure(const BaseMeasureSpec& base, int level, const Vec& lower, const Vec& upper);

enum class MetricKind { quantile_w2, smoothed_l1, bounded_lipschitz };

struct MetricOptions {
  MetricKind kind = MetricKind::quantile_w2;
  double bandwidth = 0.1;  ///< smoothed_l1 Gaussian width
};

/// Distance between two point-mass measures. quantile_w2 needs d = 1.
double error_metric(const PointSet& xa, const NodeMeasure& a, const PointSet& xb, const NodeMeasure& b,
                    const MetricOptions& options);

struct SweepRow {
  double eps = 0.0;
  double h = 0.0;
  std::size_t nodes = 0;
  std::size_t steps = 0;
  std::vector<double> errors;  ///< one per snapshot time
  std::vector<double> energy_times;
  std::vector<double> energy;
  double de_giorgi = 0.0;
  double dissipation_integral = 0.0;  ///< int D_eps dt
  double max_legendre_gap = 0.0;
  double max_chain_rule_residual = 0.0;
  double mass_drift = 0.0;
  double min_mass = 0.0;
};

struct OrderEstimate {
  double eps_coarse = 0.0;
  double eps_fine = 0.0;
  double t = 0.0;
  double order = 0.0;
};

struct ConvergenceReport {
  std::string config_hash;
  std::vector<double> snapshot_times;
  std::vector<SweepRow> rows;  ///< eps descending
  std::vector<OrderEstimate> orders;
  double local_h = 0.0;
  std::vector<double> local_energy;
  bool errors_decreasing = false;

  /// Error of the row with the given eps at snapshot index k.
  double error(double eps, std::size_t k) const;
  nlohmann::json to_json() const;
};

struct SweepOutputs {
  Trajectory local;
  std::vector<Trajectory> graph_runs;
  std::vector<std::shared_ptr<const EpsGraph>> graphs;
};

/// Runs every eps concurrently plus one local reference run. When
/// `write_files` is set, writes report.json and per-run CSVs to out_dir.
ConvergenceReport run_convergence_sweep(const ExperimentConfig& config, bool write_files = true,
                                        SweepOutputs* outputs = nullptr);

}  // namespace nlie
