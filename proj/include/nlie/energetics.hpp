#pragma once

// Energy, dissipation potentials, slopes and De Giorgi functionals for the
// graph and local equations.

#include "nlie/calculus.hpp"
#include "nlie/dynamics.hpp"
#include "nlie/geometry.hpp"

#include <iosfwd>
#include <limits>
#include <vector>

namespace nlie {

/// Value of alpha / action when mass leaves an empty upwind state.
inline constexpr double kInfiniteAction = std::numeric_limits<double>::infinity();

/// E(rho) = 1/2 sum_ik K(x_i, x_k) m_i m_k + sum_i P(x_i) m_i.
double interaction_energy(const InteractionKernel& kernel, const PointSet& positions, const NodeMeasure& rho);

/// sum_i |x_i|^2 m_i.
double second_moment(const PointSet& positions, const NodeMeasure& rho);

/// (j_+)^2 / r for r > 0; 0 for j <= 0, r = 0; kInfiniteAction for j > 0, r = 0.
double alpha(double j, double r);

/// 1/2 sum over ordered edges [alpha(J_ij, m_i mu_j) + alpha(-J_ij, mu_i m_j)] eta_ij.
double action(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& j);

/// R(rho, j) = action / 2.
inline double primal_dissipation(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& j) {
  return 0.5 * action(rho, graph, j);
}

/// R*(rho, v) = 1/4 sum over ordered edges [(v_+)^2 m_i mu_j + (v_-)^2 mu_i m_j] eta_ij.
double dual_dissipation(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v);

/// <v, j>_eta = 1/2 sum over ordered edges v_ij eta_ij J_ij.
double eta_pairing(const EdgeField& v, const EdgeField& j, const EpsGraph& graph);

/// R(rho, j) + R*(rho, v) - <v, j>_eta, nonnegative.
double legendre_gap(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v, const EdgeField& j);

/// D_eps(rho) = sum over ordered edges [(grad E'(rho))_-]^2 eta_ij m_i mu_j.
double metric_slope_graph(const InteractionKernel& kernel, const NodeMeasure& rho, const EpsGraph& graph);

/// D_T(rho) = sum_i <g_i, T(x_i) g_i> m_i with g = grad K * rho + grad P by exact summation.
double metric_slope_local(const InteractionKernel& kernel, const PointSet& positions, const NodeMeasure& rho,
                          const TensorField& tensor);
double metric_slope_local(const InteractionKernel& kernel, const LocalState& state, const TensorField& tensor);

/// |rho'|^2_T of a per-cell vector flux u (d x N): sum_i <T(x_i)^{-1} u_i, u_i> / m_i.
double local_kinetic_action(const NodeMeasure& rho, const PointSet& positions, const Mat& flux,
                            const TensorField& tensor);

struct EnergyReport {
  double energy = 0.0;
  double slope_graph = 0.0;
  double slope_local = 0.0;
  double second_moment = 0.0;
};

EnergyReport energy_report(const InteractionKernel& kernel, const NodeMeasure& rho, const EpsGraph& graph,
                           const TensorField& tensor);

/// G_eps = E(rho_T) - E(rho_0) + 1/2 int (D_eps + A(rho, j)) dt, left-endpoint rule.
/// Throws std::invalid_argument when the trajectory has no per-step fluxes.
double de_giorgi_graph(const Trajectory& traj, const InteractionKernel& kernel, const EpsGraph& graph);

/// G_T with D_T and |rho'|^2_T from the stored cell fluxes.
double de_giorgi_local(const Trajectory& traj, const InteractionKernel& kernel, const TensorField& tensor);

/// r_k = [E(rho_{k+1}) - E(rho_k)] + dt_k <-grad E'(rho_k), j_k>_eta, one per step.
std::vector<double> chain_rule_residual(const Trajectory& traj, const InteractionKernel& kernel,
                                        const EpsGraph& graph);

inline constexpr std::size_t kMaxAssignmentAtoms = 64;

/// W_T distance between two measures on the same or different point sets. d = 1 with
/// constant T uses the quantile coupling; otherwise both measures are split
/// into n <= 64 equal atoms and solved as a linear assignment over d_T^2.
/// Throws UnsupportedSizeError when no such n exists.
double wasserstein_T_small(const PointSet& xa, const NodeMeasure& a, const PointSet& xb, const NodeMeasure& b,
                           const TensorField& tensor);

/// Minimum-cost perfect matching of a square cost matrix; returns the column of every row.
std::vector<std::size_t> solve_assignment(const Mat& cost);

struct DissipationRecord {
  std::size_t step = 0;
  double t = 0.0;
  double energy = 0.0;
  double R = 0.0;
  double R_star = 0.0;
  double pairing = 0.0;
  double legendre_gap = 0.0;
  double slope = 0.0;
};

struct DissipationLedger {
  std::vector<DissipationRecord> records;
  double de_giorgi = 0.0;
  double max_chain_rule_residual = 0.0;

  void write_csv(std::ostream& out) const;
};

/// One record per stored step of a graph trajectory with fluxes.
DissipationLedger dissipation_ledger(const Trajectory& traj, const InteractionKernel& kernel, const EpsGraph& graph);

}  // namespace nlie
