#include "nlie/dynamics.hpp"

#include "drift.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nlie {

namespace {

constexpr double kTimeTol = 1e-12;
constexpr double kCflSlack = 1e-12;

bool same_time(double a, double b) { return std::abs(a - b) <= kTimeTol * std::max(1.0, std::abs(b)); }

void require_probability(const NodeMeasure& rho) {
  if (std::abs(rho.total() - 1.0) > 1e-10) {
    std::ostringstream msg;
    msg << "initial state must be a probability measure (total mass " << std::setprecision(17) << rho.total()
        << ")";
    throw std::invalid_argument(msg.str());
  }
}

std::vector<double> outflow_rates(const EpsGraph& graph, const EdgeField& v) {
  const auto mu = graph.mu();
  std::vector<double> out(graph.num_nodes(), 0.0);
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    double acc = 0.0;
    for (std::size_t s = graph.row_begin(i); s < graph.row_end(i); ++s) {
      if (v[s] > 0.0) acc += graph.eta(s) * v[s] * mu[graph.target(s)];
    }
    out[i] = acc;
  }
  return out;
}

[[noreturn]] void throw_cfl(const char* what, const char* site, std::size_t worst, double rate, double dt) {
  std::ostringstream msg;
  msg << what << ": dt = " << dt << " exceeds the CFL bound 1/" << rate << " = " << 1.0 / rate << " at " << site << ' '
      << worst;
  throw PreconditionError(msg.str());
}

GraphStep graph_step(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v, double dt) {
  const std::vector<double> out = outflow_rates(graph, v);
  std::size_t worst = 0;
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i] > out[worst]) worst = i;
  }
  if (!out.empty() && dt * out[worst] > 1.0 + kCflSlack) throw_cfl("step_nl2ie", "node", worst, out[worst], dt);

  const auto mu = graph.mu();
  std::vector<double> next(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    double in = 0.0;
    for (std::size_t s = graph.row_begin(i); s < graph.row_end(i); ++s) {
      if (v[s] < 0.0) in += graph.eta(s) * (-v[s]) * rho[graph.target(s)];
    }
    next[i] = std::max(0.0, rho[i] * (1.0 - dt * out[i])) + dt * mu[i] * in;
  }
  return {NodeMeasure(std::move(next)), upwind_flux(rho, graph, v)};
}

// Shared time loop. `advance(state, t, dt_cap)` performs one step of size at
// most dt_cap and returns the dt actually used.
template <class State, class Advance, class Record>
double integrate(const State& initial, double t_end, const SolveOptions& options, Advance&& advance,
                 Record&& record) {
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("t_end must be finite and nonnegative");
  if (options.dt.kind == DtPolicy::Kind::fixed && !(options.dt.value > 0.0)) {
    throw std::invalid_argument("fixed dt must be positive");
  }
  if (options.dt.kind == DtPolicy::Kind::adaptive && !(options.dt.value > 0.0 && options.dt.value <= 1.0)) {
    throw std::invalid_argument("CFL safety must lie in (0, 1]");
  }
  const std::size_t stride = options.record_fluxes ? 1 : std::max<std::size_t>(1, options.snapshot_stride);
  std::vector<double> stops;
  for (double s : options.stop_times) {
    if (s > 0.0 && s < t_end && !same_time(s, t_end)) stops.push_back(s);
  }
  std::sort(stops.begin(), stops.end());
  stops.push_back(t_end);

  State state = initial;
  double t = 0.0;
  double last_dt = options.dt.kind == DtPolicy::Kind::fixed ? options.dt.value : 0.0;
  record(state, t);
  std::size_t next_stop = 0;
  std::size_t step = 0;
  while (t_end > 0.0 && !same_time(t, t_end)) {
    const double target = stops[next_stop];
    const double cap = target - t;
    double used = 0.0;
    try {
      used = advance(state, t, cap, last_dt);
    } catch (const PreconditionError& e) {
      std::ostringstream msg;
      msg << "step " << step << " (t = " << t << "): " << e.what();
      throw PreconditionError(msg.str());
    }
    bool at_stop = false;
    if (same_time(t + used, target) || used >= cap) {
      t = target;
      at_stop = true;
      ++next_stop;
    } else {
      t += used;
    }
    ++step;
    if (at_stop || step % stride == 0) record(state, t);
  }
  return last_dt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectory

void Trajectory::validate(double mass_tol) const {
  if (times.size() != states.size()) throw std::logic_error("trajectory times and states differ in length");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw std::logic_error("trajectory times are not strictly increasing");
  }
  if (states.empty()) return;
  const double m0 = states.front().total();
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (std::abs(states[k].total() - m0) > mass_tol * std::max(m0, 1e-300)) {
      std::ostringstream msg;
      msg << "mass drift at snapshot " << k << " (t = " << times[k] << "): " << states[k].total() << " vs " << m0;
      throw std::logic_error(msg.str());
    }
  }
}

const NodeMeasure& Trajectory::state_at(double t) const {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (same_time(times[k], t)) return states[k];
  }
  std::ostringstream msg;
  msg << "no snapshot at t = " << t;
  throw std::out_of_range(msg.str());
}

// ---------------------------------------------------------------------------
// Graph equation

double cfl_dt(const NodeMeasure& rho, const EpsGraph& graph, const EdgeField& v, double safety, double dt_max) {
  if (rho.size() != graph.num_nodes() || v.size() != graph.num_directed_edges()) {
    throw std::invalid_argument("cfl_dt: sizes do not match the graph");
  }
  const std::vector<double> out = outflow_rates(graph, v);
  const double worst = out.empty() ? 0.0 : *std::max_element(out.begin(), out.end());
  if (!(worst > 0.0)) return dt_max;
  return std::min(safety / worst, dt_max);
}

GraphStep step_nl2ie(const NodeMeasure& rho, const EpsGraph& graph, const InteractionKernel& kernel, double dt) {
  if (rho.size() != graph.num_nodes()) throw std::invalid_argument("measure does not match graph");
  if (!(dt >= 0.0)) throw std::invalid_argument("dt must be nonnegative");
  return graph_step(rho, graph, velocity_field(kernel, rho, graph), dt);
}

Trajectory solve_nl2ie(const NodeMeasure& rho0, const EpsGraph& graph, const InteractionKernel& kernel,
                       double t_end, const SolveOptions& options) {
  if (rho0.size() != graph.num_nodes()) throw std::invalid_argument("measure does not match graph");
  require_probability(rho0);
  const auto mu = graph.mu();
  for (std::size_t i = 0; i < rho0.size(); ++i) {
    if (rho0[i] > 0.0 && !(mu[i] > 0.0)) {
      std::ostringstream msg;
      msg << "initial mass at node " << i << " where mu vanishes";
      throw std::invalid_argument(msg.str());
    }
  }

  Trajectory traj;
  traj.positions = graph.nodes();
  std::ostringstream label;
  label << "eps=" << graph.eps();
  traj.meta.label = label.str();
  traj.meta.eps = graph.eps();
  traj.meta.kernel = kernel.label();
  std::ostringstream grid;
  grid << "graph(n=" << graph.num_nodes() << ",edges=" << graph.num_directed_edges() / 2 << ")";
  traj.meta.grid = grid.str();

  auto advance = [&](NodeMeasure& rho, double, double cap, double& last_dt) {
    const EdgeField v = velocity_field(kernel, rho, graph);
    double dt = options.dt.kind == DtPolicy::Kind::fixed
                    ? options.dt.value
                    : cfl_dt(rho, graph, v, options.dt.value, options.dt.dt_max);
    if (options.dt.kind == DtPolicy::Kind::adaptive) last_dt = dt;
    dt = std::min(dt, cap);
    GraphStep next = graph_step(rho, graph, v, dt);
    if (options.record_fluxes) traj.fluxes.push_back(std::move(next.flux));
    rho = std::move(next.rho);
    return dt;
  };
  auto record = [&](const NodeMeasure& rho, double t) {
    traj.times.push_back(t);
    traj.states.push_back(rho);
  };
  traj.meta.dt = integrate(rho0, t_end, options, advance, record);
  return traj;
}

// ---------------------------------------------------------------------------
// Local equation

LocalState::LocalState(CellGrid grid, NodeMeasure masses, TensorField tensor)
    : grid_(std::move(grid)), masses_(std::move(masses)), tensor_(std::move(tensor)) {
  if (masses_.size() != grid_.num_cells()) throw std::invalid_argument("one mass per cell required");
  if (tensor_.dim() != grid_.dim()) throw std::invalid_argument("tensor dimension does not match grid");
  centers_ = grid_.centers();

  const int d = grid_.dim();
  auto faces = std::make_shared<std::vector<Faces>>(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    Faces& f = (*faces)[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
      if (grid_.multi_index(c)[static_cast<std::size_t>(a)] + 1 < grid_.counts[static_cast<std::size_t>(a)]) {
        f.left.push_back(c);
      }
    }
    const auto nf = static_cast<Eigen::Index>(f.left.size());
    f.position.resize(d, nf);
    f.tensor_row.resize(d, nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      Vec x = centers_.col(static_cast<Eigen::Index>(f.left[static_cast<std::size_t>(k)]));
      x[a] += 0.5 * grid_.h;
      f.position.col(k) = x;
      f.tensor_row.col(k) = tensor_(x).row(a).transpose();
    }
  }
  faces_ = std::move(faces);

  auto centers = std::make_shared<std::vector<Mat>>();
  centers->reserve(grid_.num_cells());
  for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
    centers->push_back(tensor_(centers_.col(static_cast<Eigen::Index>(c))));
  }
  center_tensors_ = std::move(centers);
}

LocalState LocalState::with_masses(NodeMeasure masses) const {
  if (masses.size() != grid_.num_cells()) throw std::invalid_argument("one mass per cell required");
  LocalState copy = *this;
  copy.masses_ = std::move(masses);
  return copy;
}

namespace {

std::vector<double> local_outflow_rates(const LocalState& state, const std::vector<std::vector<double>>& u) {
  std::vector<double> rate(state.grid().num_cells(), 0.0);
  const auto& faces = state.faces();
  for (std::size_t a = 0; a < faces.size(); ++a) {
    const std::size_t stride = state.grid().stride(static_cast<int>(a));
    for (std::size_t k = 0; k < faces[a].left.size(); ++k) {
      const std::size_t left = faces[a].left[k];
      if (u[a][k] > 0.0) rate[left] += u[a][k];
      else rate[left + stride] -= u[a][k];
    }
  }
  for (double& r : rate) r /= state.grid().h;
  return rate;
}

LocalState local_step(const LocalState& state, const std::vector<std::vector<double>>& u, double dt) {
  const std::vector<double> rate = local_outflow_rates(state, u);
  std::size_t worst = 0;
  for (std::size_t c = 1; c < rate.size(); ++c) {
    if (rate[c] > rate[worst]) worst = c;
  }
  if (dt * rate[worst] > 1.0 + kCflSlack) throw_cfl("step_local", "cell", worst, rate[worst], dt);

  const auto m = state.masses();
  std::vector<double> inflow(m.size(), 0.0);
  const auto& faces = state.faces();
  const double inv_h = 1.0 / state.grid().h;
  for (std::size_t a = 0; a < faces.size(); ++a) {
    const std::size_t stride = state.grid().stride(static_cast<int>(a));
    for (std::size_t k = 0; k < faces[a].left.size(); ++k) {
      const std::size_t left = faces[a].left[k];
      const double speed = u[a][k] * inv_h;
      if (speed > 0.0) inflow[left + stride] += speed * m[left];
      else inflow[left] -= speed * m[left + stride];
    }
  }
  std::vector<double> next(m.size());
  for (std::size_t c = 0; c < m.size(); ++c) next[c] = std::max(0.0, m[c] * (1.0 - dt * rate[c])) + dt * inflow[c];
  return state.with_masses(NodeMeasure(std::move(next)));
}

}  // namespace

Vec local_drift_gradient(const InteractionKernel& kernel, const LocalState& state, const Vec& x) {
  return detail::DriftEvaluator(kernel, state.centers(), state.masses())(x);
}

std::vector<std::vector<double>> face_velocities(const LocalState& state, const InteractionKernel& kernel) {
  const detail::DriftEvaluator drift(kernel, state.centers(), state.masses());
  const auto& faces = state.faces();
  std::vector<std::vector<double>> u(faces.size());
  for (std::size_t a = 0; a < faces.size(); ++a) {
    const auto nf = faces[a].position.cols();
    u[a].resize(static_cast<std::size_t>(nf));
    for (Eigen::Index k = 0; k < nf; ++k) {
      const Vec g = drift(faces[a].position.col(k));
      u[a][static_cast<std::size_t>(k)] = -faces[a].tensor_row.col(k).dot(g);
    }
  }
  return u;
}

double local_cfl_dt(const LocalState& state, const InteractionKernel& kernel, double safety, double dt_max) {
  const std::vector<double> rate = local_outflow_rates(state, face_velocities(state, kernel));
  const double worst = *std::max_element(rate.begin(), rate.end());
  if (!(worst > 0.0)) return dt_max;
  return std::min(safety / worst, dt_max);
}

Mat local_cell_flux(const LocalState& state, const InteractionKernel& kernel) {
  const detail::DriftEvaluator drift(kernel, state.centers(), state.masses());
  const auto n = static_cast<Eigen::Index>(state.grid().num_cells());
  Mat flux = Mat::Zero(state.grid().dim(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double m = state.masses()[static_cast<std::size_t>(c)];
    if (m == 0.0) continue;
    flux.col(c) = -m * (state.center_tensors()[static_cast<std::size_t>(c)] * drift(state.centers().col(c)));
  }
  return flux;
}

LocalState step_local(const LocalState& state, const InteractionKernel& kernel, double dt) {
  if (!(dt >= 0.0)) throw std::invalid_argument("dt must be nonnegative");
  return local_step(state, face_velocities(state, kernel), dt);
}

Trajectory solve_nlie_local(const LocalState& rho0, const InteractionKernel& kernel, double t_end,
                            const SolveOptions& options) {
  require_probability(rho0.masses());

  Trajectory traj;
  traj.positions = rho0.centers();
  traj.meta.label = "local";
  traj.meta.kernel = kernel.label();
  std::ostringstream grid;
  grid << "cells(h=" << rho0.grid().h << ",n=" << rho0.grid().num_cells() << ")";
  traj.meta.grid = grid.str();

  auto advance = [&](LocalState& state, double, double cap, double& last_dt) {
    const auto u = face_velocities(state, kernel);
    double dt = options.dt.value;
    if (options.dt.kind == DtPolicy::Kind::adaptive) {
      const std::vector<double> rate = local_outflow_rates(state, u);
      const double worst = *std::max_element(rate.begin(), rate.end());
      dt = worst > 0.0 ? std::min(options.dt.value / worst, options.dt.dt_max) : options.dt.dt_max;
      last_dt = dt;
    }
    dt = std::min(dt, cap);
    if (options.record_fluxes) traj.cell_fluxes.push_back(local_cell_flux(state, kernel));
    state = local_step(state, u, dt);
    return dt;
  };
  auto record = [&](const LocalState& state, double t) {
    traj.times.push_back(t);
    traj.states.push_back(state.masses());
  };
  traj.meta.dt = integrate(rho0, t_end, options, advance, record);
  return traj;
}

// ---------------------------------------------------------------------------
// Export

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto d = traj.positions.rows();
  out << "t,node_or_cell_id";
  for (Eigen::Index a = 0; a < d; ++a) out << ",x" << a + 1;
  out << ",mass\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    for (std::size_t i = 0; i < traj.states[k].size(); ++i) {
      out << traj.times[k] << ',' << i;
      for (Eigen::Index a = 0; a < d; ++a) out << ',' << traj.positions(a, static_cast<Eigen::Index>(i));
      out << ',' << traj.states[k][i] << '\n';
    }
  }
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty trajectory file");
  std::size_t columns = 1;
  for (char ch : line) columns += ch == ',' ? 1 : 0;
  if (columns < 4 || line.rfind("t,node_or_cell_id,", 0) != 0) throw std::invalid_argument("bad trajectory header");
  const std::size_t d = columns - 3;

  std::vector<double> times;
  std::vector<std::vector<double>> masses;
  std::map<std::size_t, Vec> where;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(fields, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("bad number on trajectory row " + std::to_string(row));
      }
    }
    if (vals.size() != columns) throw std::invalid_argument("wrong column count on trajectory row " + std::to_string(row));
    if (times.empty() || vals[0] != times.back()) {
      times.push_back(vals[0]);
      masses.emplace_back();
    }
    const auto id = static_cast<std::size_t>(vals[1]);
    if (id != masses.back().size()) throw std::invalid_argument("node ids out of order on row " + std::to_string(row));
    masses.back().push_back(vals.back());
    if (times.size() == 1) {
      Vec x(static_cast<Eigen::Index>(d));
      for (std::size_t a = 0; a < d; ++a) x[static_cast<Eigen::Index>(a)] = vals[2 + a];
      where[id] = x;
    }
  }
  Trajectory traj;
  traj.times = std::move(times);
  traj.positions.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(where.size()));
  for (const auto& [id, x] : where) traj.positions.col(static_cast<Eigen::Index>(id)) = x;
  for (auto& m : masses) {
    if (m.size() != where.size()) throw std::invalid_argument("snapshots with different node counts");
    traj.states.emplace_back(std::move(m));
  }
  traj.meta.label = "csv";
  return traj;
}

void write_trajectory_metadata(std::ostream& out, const Trajectory& traj, const std::string& config_hash) {
  nlohmann::json j;
  j["label"] = traj.meta.label;
  if (std::isnan(traj.meta.eps)) j["eps"] = "local";
  else j["eps"] = traj.meta.eps;
  j["dt"] = traj.meta.dt;
  j["kernel"] = traj.meta.kernel;
  j["grid"] = traj.meta.grid;
  j["snapshots"] = traj.times.size();
  j["t_end"] = traj.times.empty() ? 0.0 : traj.times.back();
  j["config_hash"] = config_hash;
  out << j.dump(2) << '\n';
}

}  // namespace nlie
