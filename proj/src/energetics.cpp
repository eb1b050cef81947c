#include "nlie/energetics.hpp"

#include "drift.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nlie {

namespace {

void require_graph_sizes(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField* field = nullptr,
                         const EdgeField* other = nullptr) {
  if (rho.size() != graph.num_nodes()) throw std::invalid_argument("measure does not match graph");
  for (const EdgeField* f : {field, other}) {
    if (f && f->size() != graph.num_directed_edges()) throw std::invalid_argument("edge field does not match graph");
  }
}

std::vector<std::size_t> support_of(const NodeMeasure& rho) {
  std::vector<std::size_t> s;
  for (std::size_t k = 0; k < rho.size(); ++k) {
    if (rho[k] != 0.0) s.push_back(k);
  }
  return s;
}

void require_step_fluxes(const Trajectory& traj, bool graph) {
  const std::size_t have = graph ? traj.fluxes.size() : traj.cell_fluxes.size();
  if (traj.states.empty() || have + 1 != traj.states.size()) {
    throw std::invalid_argument(graph ? "trajectory carries no per-step edge fluxes"
                                      : "trajectory carries no per-step cell fluxes");
  }
}

}  // namespace

double interaction_energy(const InteractionKernel& kernel, const PointSet& positions, const NodeMeasure& rho) {
  if (rho.size() != static_cast<std::size_t>(positions.cols())) {
    throw std::invalid_argument("measure does not match node count");
  }
  const std::vector<std::size_t> support = support_of(rho);
  const InteractionKernel bare = kernel.without_potential();
  const std::vector<double> conv = convolve(bare, rho, positions);
  double pair = 0.0;
  double pot = 0.0;
  for (std::size_t i : support) {
    pair += conv[i] * rho[i];
    if (kernel.has_potential()) pot += kernel.potential(positions.col(static_cast<Eigen::Index>(i))) * rho[i];
  }
  return 0.5 * pair + pot;
}

double second_moment(const PointSet& positions, const NodeMeasure& rho) {
  double m2 = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) m2 += positions.col(static_cast<Eigen::Index>(i)).squaredNorm() * rho[i];
  return m2;
}

double alpha(double j, double r) {
  if (!(r >= 0.0)) throw std::invalid_argument("alpha: r must be nonnegative");
  if (r > 0.0) {
    const double jp = std::max(j, 0.0);
    return jp * jp / r;
  }
  return j > 0.0 ? kInfiniteAction : 0.0;
}

double action(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& j) {
  require_graph_sizes(rho, graph, &j);
  const auto mu = graph.mu();
  double acc = 0.0;
  for (std::size_t s = 0; s < j.size(); ++s) {
    const std::size_t a = graph.source(s);
    const std::size_t b = graph.target(s);
    const double fwd = alpha(j[s], rho[a] * mu[b]);
    const double bwd = alpha(-j[s], mu[a] * rho[b]);
    acc += (fwd + bwd) * graph.eta(s);
  }
  return 0.5 * acc;
}

double dual_dissipation(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v) {
  require_graph_sizes(rho, graph, &v);
  const auto mu = graph.mu();
  double acc = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) {
    const std::size_t a = graph.source(s);
    const std::size_t b = graph.target(s);
    const double vp = std::max(v[s], 0.0);
    const double vm = std::max(-v[s], 0.0);
    acc += (vp * vp * rho[a] * mu[b] + vm * vm * mu[a] * rho[b]) * graph.eta(s);
  }
  return 0.25 * acc;
}

double eta_pairing(const EdgeField& v, const EdgeField& j, const EpsGraph& graph) {
  if (v.size() != graph.num_directed_edges() || j.size() != graph.num_directed_edges()) {
    throw std::invalid_argument("edge field does not match graph");
  }
  double acc = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) acc += v[s] * graph.eta(s) * j[s];
  return 0.5 * acc;
}

double legendre_gap(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v, const EdgeField& j) {
  require_graph_sizes(rho, graph, &v, &j);
  return primal_dissipation(rho, graph, j) + dual_dissipation(rho, graph, v) - eta_pairing(v, j, graph);
}

double metric_slope_graph(const InteractionKernel& kernel, const NodeMeasure& rho, const EpsGraph& graph) {
  require_graph_sizes(rho, graph);
  const std::vector<double> phi = first_variation(kernel, rho, graph.nodes());
  const auto mu = graph.mu();
  double acc = 0.0;
  for (std::size_t s = 0; s < graph.num_directed_edges(); ++s) {
    const std::size_t a = graph.source(s);
    const std::size_t b = graph.target(s);
    const double neg = std::max(-(phi[b] - phi[a]), 0.0);
    acc += neg * neg * graph.eta(s) * rho[a] * mu[b];
  }
  return acc;
}

double metric_slope_local(const InteractionKernel& kernel, const PointSet& positions, const NodeMeasure& rho,
                          const TensorField& tensor) {
  if (rho.size() != static_cast<std::size_t>(positions.cols())) {
    throw std::invalid_argument("measure does not match point count");
  }
  const detail::DriftEvaluator drift(kernel, positions, rho);
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (rho[i] == 0.0) continue;
    const Vec x = positions.col(static_cast<Eigen::Index>(i));
    const Vec g = drift(x);
    acc += g.dot(tensor(x) * g) * rho[i];
  }
  return acc;
}

double metric_slope_local(const InteractionKernel& kernel, const LocalState& state, const TensorField& tensor) {
  return metric_slope_local(kernel, state.centers(), state.masses(), tensor);
}

double local_kinetic_action(const NodeMeasure& rho, const PointSet& positions, const Mat& flux,
                            const TensorField& tensor) {
  if (flux.cols() != positions.cols() || rho.size() != static_cast<std::size_t>(positions.cols())) {
    throw std::invalid_argument("flux does not match point count");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < flux.cols(); ++i) {
    const Vec u = flux.col(i);
    if (u.squaredNorm() == 0.0) continue;
    const double m = rho[static_cast<std::size_t>(i)];
    if (!(m > 0.0)) return kInfiniteAction;
    acc += u.dot(tensor(positions.col(i)).ldlt().solve(u)) / m;
  }
  return acc;
}

EnergyReport energy_report(const InteractionKernel& kernel, const NodeMeasure& rho, const EpsGraph& graph,
                           const TensorField& tensor) {
  EnergyReport r;
  r.energy = interaction_energy(kernel, graph.nodes(), rho);
  r.slope_graph = metric_slope_graph(kernel, rho, graph);
  r.slope_local = metric_slope_local(kernel, graph.nodes(), rho, tensor);
  r.second_moment = second_moment(graph.nodes(), rho);
  return r;
}

double de_giorgi_graph(const Trajectory& traj, const InteractionKernel& kernel, const EpsGraph& graph) {
  require_step_fluxes(traj, true);
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const double dt = traj.times[k + 1] - traj.times[k];
    const NodeMeasure& rho = traj.states[k];
    integral += dt * (metric_slope_graph(kernel, rho, graph) + action(rho, graph, traj.fluxes[k]));
  }
  const double de = interaction_energy(kernel, graph.nodes(), traj.states.back()) -
                    interaction_energy(kernel, graph.nodes(), traj.states.front());
  return de + 0.5 * integral;
}

double de_giorgi_local(const Trajectory& traj, const InteractionKernel& kernel, const TensorField& tensor) {
  require_step_fluxes(traj, false);
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const double dt = traj.times[k + 1] - traj.times[k];
    const NodeMeasure& rho = traj.states[k];
    integral += dt * (metric_slope_local(kernel, traj.positions, rho, tensor) +
                      local_kinetic_action(rho, traj.positions, traj.cell_fluxes[k], tensor));
  }
  const double de = interaction_energy(kernel, traj.positions, traj.states.back()) -
                    interaction_energy(kernel, traj.positions, traj.states.front());
  return de + 0.5 * integral;
}

std::vector<double> chain_rule_residual(const Trajectory& traj, const InteractionKernel& kernel,
                                        const EpsGraph& graph) {
  require_step_fluxes(traj, true);
  std::vector<double> r;
  r.reserve(traj.fluxes.size());
  double e_prev = interaction_energy(kernel, graph.nodes(), traj.states.front());
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const double dt = traj.times[k + 1] - traj.times[k];
    const double e_next = interaction_energy(kernel, graph.nodes(), traj.states[k + 1]);
    const EdgeField v = velocity_field(kernel, traj.states[k], graph);
    r.push_back((e_next - e_prev) + dt * eta_pairing(v, traj.fluxes[k], graph));
    e_prev = e_next;
  }
  return r;
}

DissipationLedger dissipation_ledger(const Trajectory& traj, const InteractionKernel& kernel, const EpsGraph& graph) {
  require_step_fluxes(traj, true);
  DissipationLedger ledger;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const NodeMeasure& rho = traj.states[k];
    const EdgeField v = velocity_field(kernel, rho, graph);
    const EdgeField& j = traj.fluxes[k];
    DissipationRecord rec;
    rec.step = k;
    rec.t = traj.times[k];
    rec.energy = interaction_energy(kernel, graph.nodes(), rho);
    rec.R = primal_dissipation(rho, graph, j);
    rec.R_star = dual_dissipation(rho, graph, v);
    rec.pairing = eta_pairing(v, j, graph);
    rec.legendre_gap = rec.R + rec.R_star - rec.pairing;
    rec.slope = metric_slope_graph(kernel, rho, graph);
    ledger.records.push_back(rec);
  }
  ledger.de_giorgi = de_giorgi_graph(traj, kernel, graph);
  for (double r : chain_rule_residual(traj, kernel, graph)) {
    ledger.max_chain_rule_residual = std::max(ledger.max_chain_rule_residual, std::abs(r));
  }
  return ledger;
}

void DissipationLedger::write_csv(std::ostream& out) const {
  out << "step,t,energy,R,R_star,pairing,legendre_gap,slope\n" << std::setprecision(17);
  for (const DissipationRecord& r : records) {
    out << r.step << ',' << r.t << ',' << r.energy << ',' << r.R << ',' << r.R_star << ',' << r.pairing << ','
        << r.legendre_gap << ',' << r.slope << '\n';
  }
}

// ---------------------------------------------------------------------------
// Small-instance W_T

namespace {

struct Quantiles {
  std::vector<double> x;
  std::vector<double> cumulative;  // right end of each atom's mass interval
};

Quantiles quantiles(const PointSet& pts, const NodeMeasure& m) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pts(0, static_cast<Eigen::Index>(a)) < pts(0, static_cast<Eigen::Index>(b));
  });
  Quantiles q;
  double acc = 0.0;
  for (std::size_t i : order) {
    acc += m[i] / m.total();
    q.x.push_back(pts(0, static_cast<Eigen::Index>(i)));
    q.cumulative.push_back(acc);
  }
  if (!q.cumulative.empty()) q.cumulative.back() = 1.0;
  return q;
}

// Smallest n <= kMaxAssignmentAtoms with every normalized mass a multiple of 1/n.
std::size_t common_atoms(const NodeMeasure& a, const NodeMeasure& b) {
  for (std::size_t n = 1; n <= kMaxAssignmentAtoms; ++n) {
    bool ok = true;
    for (const NodeMeasure* m : {&a, &b}) {
      for (std::size_t i = 0; i < m->size() && ok; ++i) {
        const double units = (*m)[i] / m->total() * static_cast<double>(n);
        ok = std::abs(units - std::round(units)) <= 1e-9 * static_cast<double>(n);
      }
    }
    if (ok) return n;
  }
  return 0;
}

std::vector<std::size_t> atoms(const NodeMeasure& m, std::size_t n) {
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto units = static_cast<std::size_t>(std::llround(m[i] / m.total() * static_cast<double>(n)));
    owner.insert(owner.end(), units, i);
  }
  return owner;
}

}  // namespace

double wasserstein_T_small(const PointSet& xa, const NodeMeasure& a, const PointSet& xb, const NodeMeasure& b,
                           const TensorField& tensor) {
  if (a.size() != static_cast<std::size_t>(xa.cols()) || b.size() != static_cast<std::size_t>(xb.cols())) {
    throw std::invalid_argument("measure does not match point count");
  }
  if (xa.rows() != tensor.dim() || xb.rows() != tensor.dim()) throw std::invalid_argument("dimension mismatch");
  if (!(a.total() > 0.0) || std::abs(a.total() - b.total()) > 1e-12 * a.total()) {
    throw std::invalid_argument("W_T needs two nonzero measures of equal mass");
  }

  if (tensor.dim() == 1 && tensor.is_constant()) {
    const double scale = tensor.constant_value()(0, 0);
    const Quantiles qa = quantiles(xa, a);
    const Quantiles qb = quantiles(xb, b);
    double acc = 0.0;
    double s = 0.0;
    std::size_t i = 0;
    std::size_t k = 0;
    while (i < qa.x.size() && k < qb.x.size()) {
      const double next = std::min(qa.cumulative[i], qb.cumulative[k]);
      const double dx = qa.x[i] - qb.x[k];
      acc += (next - s) * dx * dx;
      s = next;
      if (qa.cumulative[i] <= next) ++i;
      if (qb.cumulative[k] <= next) ++k;
    }
    return std::sqrt(a.total() * acc / scale);
  }

  const std::size_t n = common_atoms(a, b);
  if (n == 0) {
    std::ostringstream msg;
    msg << "masses are not multiples of 1/n for any n <= " << kMaxAssignmentAtoms;
    throw UnsupportedSizeError(msg.str());
  }
  const std::vector<std::size_t> from = atoms(a, n);
  const std::vector<std::size_t> to = atoms(b, n);
  if (from.size() != n || to.size() != n) throw UnsupportedSizeError("atom split is inconsistent");

  // d_T is evaluated once per distinct point pair.
  Mat pair_cost = Mat::Constant(xa.cols(), xb.cols(), -1.0);
  Mat cost(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const auto p = static_cast<Eigen::Index>(from[r]);
      const auto q = static_cast<Eigen::Index>(to[c]);
      if (pair_cost(p, q) < 0.0) {
        const double dist = dT_distance(tensor, xa.col(p), xb.col(q));
        pair_cost(p, q) = dist * dist;
      }
      cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = pair_cost(p, q);
    }
  }
  const std::vector<std::size_t> match = solve_assignment(cost);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(match[r]));
  return std::sqrt(a.total() * total / static_cast<double>(n));
}

}  // namespace nlie
