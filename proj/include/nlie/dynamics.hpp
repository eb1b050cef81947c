#pragma once

// Explicit upwind time stepping for the graph equation and for the local
// tensor-mobility reference equation.

#include "nlie/calculus.hpp"
#include "nlie/geometry.hpp"
#include "nlie/grid.hpp"

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace nlie {

inline constexpr double kDefaultDtMax = 0.1;

struct DtPolicy {
  enum class Kind { fixed, adaptive };
  Kind kind = Kind::adaptive;
  double value = 0.5;  ///< dt for fixed, CFL safety factor for adaptive
  double dt_max = kDefaultDtMax;

  static DtPolicy fixed(double dt) { return {Kind::fixed, dt, kDefaultDtMax}; }
  static DtPolicy adaptive(double safety = 0.5, double dt_max = kDefaultDtMax) {
    return {Kind::adaptive, safety, dt_max};
  }
};

struct SolveOptions {
  DtPolicy dt = DtPolicy::adaptive();
  /// Record every `snapshot_stride`-th state (the final state always).
  std::size_t snapshot_stride = 1;
  /// Times the integrator lands on exactly and records.
  std::vector<double> stop_times;
  /// Keep the flux of every step; forces snapshot_stride = 1.
  bool record_fluxes = false;
};

struct TrajectoryMeta {
  std::string label;  ///< "eps=<value>" or "local"
  double eps = std::numeric_limits<double>::quiet_NaN();
  double dt = 0.0;    ///< fixed dt, or the last adaptive dt
  std::string kernel;
  std::string grid;
};

/// Sampled curve (rho_t, j_t). With record_fluxes, fluxes[k] (graph) or
/// cell_fluxes[k] (local) is the flux that moved states[k] to states[k+1].
struct Trajectory {
  std::vector<double> times;
  std::vector<NodeMeasure> states;
  PointSet positions;
  std::vector<EdgeField> fluxes;
  std::vector<Mat> cell_fluxes;  ///< d x N per step, local runs only
  TrajectoryMeta meta;

  bool has_fluxes() const { return !fluxes.empty() || !cell_fluxes.empty(); }
  std::size_t size() const { return states.size(); }

  /// Throws std::logic_error unless times increase strictly and every state
  /// carries the initial mass to `mass_tol` relative.
  void validate(double mass_tol = 1e-10) const;

  /// State recorded at time t (within 1e-12), or throws std::out_of_range.
  const NodeMeasure& state_at(double t) const;
};

// ---------------------------------------------------------------------------
// Graph equation

/// safety / max_i sum_j eta_ij (v_ij)_+ mu_j; dt_max when v vanishes.
double cfl_dt(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v, double safety,
              double dt_max = kDefaultDtMax);

struct GraphStep {
  NodeMeasure rho;
  EdgeField flux;
};

/// One explicit upwind Euler step m_i <- m_i - dt sum_j eta_ij j_ij. The update
/// is evaluated as m_i (1 - dt out_i) + dt in_i so that it stays nonnegative
/// whenever dt respects the CFL bound. Throws PreconditionError otherwise.
GraphStep step_nl2ie(const NodeMeasure& rho, const EpsGraph& graph, const InteractionKernel& kernel,
                     double dt);

Trajectory solve_nl2ie(const NodeMeasure& rho0, const EpsGraph& graph,
                       const InteractionKernel& kernel, double t_end, const SolveOptions& options = {});

// ---------------------------------------------------------------------------
// Local equation d_t rho = div(rho T (grad K * rho + grad P))

/// Cell masses on a uniform grid with the mobility tensor cached at faces
/// and cell centers. The outer boundary is closed (zero flux).
class LocalState {
 public:
  LocalState(CellGrid grid, NodeMeasure masses, TensorField tensor);

  const CellGrid& grid() const { return grid_; }
  const NodeMeasure& masses() const { return masses_; }
  const TensorField& tensor() const { return tensor_; }
  const PointSet& centers() const { return centers_; }

  /// Same grid and tensor, new masses.
  LocalState with_masses(NodeMeasure masses) const;

  struct Faces {
    std::vector<std::size_t> left;  ///< cell on the low side; right = left + stride
    PointSet position;              ///< d x F face centers
    Mat tensor_row;                 ///< d x F, row `axis` of T at the face
  };
  const std::vector<Faces>& faces() const { return *faces_; }
  const std::vector<Mat>& center_tensors() const { return *center_tensors_; }

 private:
  CellGrid grid_;
  NodeMeasure masses_;
  TensorField tensor_;
  PointSet centers_;
  std::shared_ptr<const std::vector<Faces>> faces_;
  std::shared_ptr<const std::vector<Mat>> center_tensors_;
};

/// (grad K * rho + grad P)(x) by exact summation over the supported cells.
Vec local_drift_gradient(const InteractionKernel& kernel, const LocalState& state, const Vec& x);

/// Face velocities u_f = -(T(x_f) g(x_f)) . e_axis, per axis.
std::vector<std::vector<double>> face_velocities(const LocalState& state, const InteractionKernel& kernel);

/// safety / max_c (sum of outward face speeds of c) / h; dt_max when at rest.
double local_cfl_dt(const LocalState& state, const InteractionKernel& kernel, double safety,
                    double dt_max = kDefaultDtMax);

/// Per-cell vector flux m_c * (-T(x_c) g(x_c)), d x N.
Mat local_cell_flux(const LocalState& state, const InteractionKernel& kernel);

/// Donor-cell finite-volume step, all axes updated from the same state.
LocalState step_local(const LocalState& state, const InteractionKernel& kernel, double dt);

Trajectory solve_nlie_local(const LocalState& rho0, const InteractionKernel& kernel, double t_end,
                            const SolveOptions& options = {});

// ---------------------------------------------------------------------------
// Export

/// CSV with header `t,node_or_cell_id,x1..xd,mass`, one row per (snapshot, node).
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);

/// JSON sidecar: label, eps, dt, kernel, grid, snapshot count, config hash.
void write_trajectory_metadata(std::ostream& out, const Trajectory& traj, const std::string& config_hash);

}  // namespace nlie
