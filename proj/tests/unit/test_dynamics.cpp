#include "fixtures.hpp"

#include "nlie/dynamics.hpp"
#include "nlie/energetics.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <sstream>

using namespace nlie;
using nlie::test::line;
using nlie::test::manual_graph;

namespace {

double centred_variance(const PointSet& x, const NodeMeasure& rho) {
  double mass = 0.0, mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double xi = x(0, static_cast<Eigen::Index>(i));
    mass += rho[i];
    mean += rho[i] * xi;
    sq += rho[i] * xi * xi;
  }
  mean /= mass;
  return sq / mass - mean * mean;
}

double centre_of_mass(const PointSet& x, const NodeMeasure& rho) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) acc += rho[i] * x(0, static_cast<Eigen::Index>(i));
  return acc / rho.total();
}

NodeMeasure uniform_on(const PointSet& x, double lo, double hi) {
  std::vector<double> m(static_cast<std::size_t>(x.cols()), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double xi = x(0, static_cast<Eigen::Index>(i));
    if (xi >= lo - 1e-12 && xi <= hi + 1e-12) m[i] = 1.0;
  }
  return NodeMeasure(std::move(m)).normalized();
}

LocalState local_line(std::size_t cells, double lo, double hi, std::vector<double> masses, Mat tensor) {
  const double h = (hi - lo) / static_cast<double>(cells);
  return LocalState(CellGrid(Vec::Constant(1, lo), h, {cells}), NodeMeasure(std::move(masses)).normalized(),
                    TensorField::constant(std::move(tensor)));
}

std::vector<double> bump_masses(std::size_t cells, double lo, double hi, double centre, double width) {
  const double h = (hi - lo) / static_cast<double>(cells);
  std::vector<double> m(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double x = lo + (static_cast<double>(c) + 0.5) * h;
    const double u = (x - centre) / width;
    m[c] = std::abs(u) < 1.0 ? (1.0 - u * u) : 0.0;
  }
  return m;
}

}  // namespace

TEST(CflDt, Examples) {
  const EpsGraph g = manual_graph(line({0.0, 1.0}), {{0, 1, 1.0}});
  const NodeMeasure rho({0.5, 0.5});
  EXPECT_EQ(cfl_dt(rho, g, EdgeField::zeros(g), 0.5), kDefaultDtMax);
  EXPECT_EQ(cfl_dt(rho, g, EdgeField::zeros(g), 0.5, 0.7), 0.7);
  EdgeField v = EdgeField::zeros(g);
  set_edge(v, g, 0, 1, 2.0);
  EXPECT_DOUBLE_EQ(cfl_dt(rho, g, v, 1.0, 10.0), 0.5);
  const EpsGraph heavy = manual_graph(line({0.0, 1.0}), {{0, 1, 2.0}});
  EXPECT_DOUBLE_EQ(cfl_dt(rho, heavy, v, 1.0, 10.0), 0.25);
}

TEST(StepNl2ie, StationaryStates) {
  const EpsGraph g = manual_graph(line({0.0, 1.0}), {{0, 1, 1.0}});
  const NodeMeasure rho({0.5, 0.5});
  const GraphStep step = step_nl2ie(rho, g, InteractionKernel::quadratic_attractive(), 0.3);
  EXPECT_EQ(step.rho[0], 0.5);
  EXPECT_EQ(step.rho[1], 0.5);
  const GraphStep dirac = step_nl2ie(NodeMeasure::dirac(2, 1), g, InteractionKernel::quadratic_attractive(), 0.3);
  EXPECT_EQ(dirac.rho[1], 1.0);
}

TEST(StepNl2ie, ThreeNodesGatherInTheMiddle) {
  const EpsGraph g = manual_graph(line({-1.0, 0.0, 1.0}), {{0, 1, 1.0}, {1, 2, 1.0}});
  const NodeMeasure rho({0.5, 0.0, 0.5});
  const auto k = InteractionKernel::quadratic_attractive();
  const double dt = cfl_dt(rho, g, velocity_field(k, rho, g), 0.5);
  const GraphStep step = step_nl2ie(rho, g, k, dt);
  EXPECT_GT(step.rho[1], 0.0);
  EXPECT_NEAR(step.rho.total(), 1.0, 1e-15);
  EXPECT_EQ(step.flux.size(), g.num_directed_edges());
}

TEST(StepNl2ie, CflViolationNamesNode) {
  const EpsGraph g = manual_graph(line({-1.0, 0.0, 1.0}), {{0, 1, 1.0}, {1, 2, 1.0}});
  try {
    step_nl2ie(NodeMeasure({0.5, 0.0, 0.5}), g, InteractionKernel::quadratic_attractive(), 10.0);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("node"), std::string::npos) << e.what();
  }
}

TEST(SolveNl2ie, ZeroHorizon) {
  const EpsGraph g = test::uniform_line_graph(-1.0, 0.1, 21, 0.4);
  const NodeMeasure rho0 = uniform_on(g.nodes(), -0.5, 0.5);
  const Trajectory traj = solve_nl2ie(rho0, g, InteractionKernel::quadratic_attractive(), 0.0);
  ASSERT_EQ(traj.size(), 1u);
  EXPECT_EQ(traj.times[0], 0.0);
  for (std::size_t i = 0; i < rho0.size(); ++i) EXPECT_EQ(traj.states[0][i], rho0[i]);
}

TEST(SolveNl2ie, StationaryTrajectory) {
  const EpsGraph g = manual_graph(line({0.0, 1.0}), {{0, 1, 1.0}});
  SolveOptions opt;
  opt.dt = DtPolicy::fixed(0.25);
  const Trajectory traj = solve_nl2ie(NodeMeasure({0.5, 0.5}), g, InteractionKernel::quadratic_attractive(), 1.0, opt);
  EXPECT_EQ(traj.size(), 5u);
  for (const NodeMeasure& s : traj.states) {
    EXPECT_EQ(s[0], 0.5);
    EXPECT_EQ(s[1], 0.5);
  }
}

TEST(SolveNl2ie, RejectsBadInitialData) {
  const EpsGraph g = manual_graph(line({0.0, 1.0}), {{0, 1, 1.0}}, {1.0, 0.0});
  const auto k = InteractionKernel::quadratic_attractive();
  EXPECT_THROW(solve_nl2ie(NodeMeasure({0.5, 0.2}), g, k, 1.0), std::invalid_argument);
  EXPECT_THROW(solve_nl2ie(NodeMeasure({0.5, 0.5}), g, k, 1.0), std::invalid_argument);
}

TEST(SolveNl2ie, ContractsConservesAndStaysPositive) {
  const EpsGraph g = test::uniform_line_graph(-2.0, 0.05, 81, 0.2);
  const NodeMeasure rho0 = uniform_on(g.nodes(), -1.0, 1.0);
  const auto k = InteractionKernel::quadratic_attractive();
  SolveOptions opt;
  opt.dt = DtPolicy::adaptive(0.5);
  opt.record_fluxes = true;
  const Trajectory traj = solve_nl2ie(rho0, g, k, 1.0, opt);
  ASSERT_GT(traj.size(), 5u);
  traj.validate();
  double previous = centred_variance(g.nodes(), rho0);
  for (std::size_t n = 1; n < traj.size(); ++n) {
    const NodeMeasure& s = traj.states[n];
    const double var = centred_variance(g.nodes(), s);
    EXPECT_LT(var, previous) << "t = " << traj.times[n];
    previous = var;
    EXPECT_LE(std::abs(s.total() - traj.states[n - 1].total()), 1e-14);
    for (double m : s.masses()) EXPECT_GE(m, 0.0);
    const double dt = traj.times[n] - traj.times[n - 1];
    const double e0 = interaction_energy(k, g.nodes(), traj.states[n - 1]);
    const double e1 = interaction_energy(k, g.nodes(), s);
    EXPECT_LE(e1, e0 + 10.0 * dt * dt * std::abs(e0));
  }
}

TEST(SolveNl2ie, CoarseAndFineTimeStepsAgree) {
  // Independent reference: the same run at a tenth of the time step.
  const EpsGraph g = test::uniform_line_graph(-2.0, 0.05, 81, 0.2);
  const NodeMeasure rho0 = uniform_on(g.nodes(), -1.0, 1.0);
  const auto k = InteractionKernel::quadratic_attractive();
  SolveOptions coarse;
  coarse.dt = DtPolicy::fixed(0.01);
  SolveOptions fine;
  fine.dt = DtPolicy::fixed(0.001);
  const Trajectory a = solve_nl2ie(rho0, g, k, 0.5, coarse);
  const Trajectory b = solve_nl2ie(rho0, g, k, 0.5, fine);
  const double va = centred_variance(g.nodes(), a.states.back());
  const double vb = centred_variance(g.nodes(), b.states.back());
  EXPECT_LT(va, centred_variance(g.nodes(), rho0));
  EXPECT_NEAR(va, vb, 0.02 * vb);
}

TEST(SolveNl2ie, LandsOnStopTimes) {
  const EpsGraph g = test::uniform_line_graph(-2.0, 0.1, 41, 0.4);
  SolveOptions opt;
  opt.stop_times = {0.123, 0.5};
  opt.snapshot_stride = 1000;
  const Trajectory traj =
      solve_nl2ie(uniform_on(g.nodes(), -1.0, 1.0), g, InteractionKernel::quadratic_attractive(), 0.7, opt);
  EXPECT_NO_THROW(traj.state_at(0.123));
  EXPECT_NO_THROW(traj.state_at(0.5));
  EXPECT_DOUBLE_EQ(traj.times.back(), 0.7);
  EXPECT_THROW(traj.state_at(0.3), std::out_of_range);
}

TEST(Trajectory, ValidateCatchesBadTimes) {
  Trajectory t;
  t.times = {0.0, 0.0};
  t.states = {NodeMeasure({1.0}), NodeMeasure({1.0})};
  EXPECT_THROW(t.validate(), std::logic_error);
  t.times = {0.0, 1.0};
  t.states[1] = NodeMeasure({0.9});
  EXPECT_THROW(t.validate(), std::logic_error);
}

TEST(TrajectoryIo, CsvRoundTripAndMetadata) {
  const EpsGraph g = test::uniform_line_graph(-1.0, 0.1, 21, 0.4);
  SolveOptions opt;
  opt.snapshot_stride = 2;
  const Trajectory traj =
      solve_nl2ie(uniform_on(g.nodes(), -0.5, 0.5), g, InteractionKernel::quadratic_attractive(), 0.5, opt);
  std::stringstream buf;
  write_trajectory_csv(buf, traj);
  EXPECT_EQ(buf.str().rfind("t,node_or_cell_id,x1,mass\n", 0), 0u);
  const Trajectory back = read_trajectory_csv(buf);
  ASSERT_EQ(back.size(), traj.size());
  EXPECT_EQ((back.positions - traj.positions).norm(), 0.0);
  for (std::size_t n = 0; n < traj.size(); ++n) {
    EXPECT_EQ(back.times[n], traj.times[n]);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) EXPECT_EQ(back.states[n][i], traj.states[n][i]);
  }
  std::stringstream meta;
  write_trajectory_metadata(meta, traj, "0123456789abcdef");
  const auto j = nlohmann::json::parse(meta.str());
  EXPECT_EQ(j.at("config_hash"), "0123456789abcdef");
  EXPECT_DOUBLE_EQ(j.at("eps").get<double>(), 0.4);
}

TEST(SolveNl2ie, Deterministic) {
  const EpsGraph g = test::uniform_line_graph(-2.0, 0.05, 81, 0.2);
  const auto run = [&] {
    std::stringstream s;
    write_trajectory_csv(s, solve_nl2ie(uniform_on(g.nodes(), -1.0, 1.0), g, InteractionKernel::gaussian(0.5), 0.5));
    return s.str();
  };
  EXPECT_EQ(run(), run());
}

// ---------------------------------------------------------------------------
// Local solver

TEST(StepLocal, ZeroVelocityIsFixed) {
  const LocalState s = local_line(40, -1.0, 1.0, bump_masses(40, -1.0, 1.0, 0.1, 0.5), Mat::Identity(1, 1));
  const LocalState next = step_local(s, InteractionKernel::zero(), 0.05);
  for (std::size_t c = 0; c < 40; ++c) EXPECT_EQ(next.masses()[c], s.masses()[c]);
}

TEST(StepLocal, CflViolation) {
  const LocalState s = local_line(40, -1.0, 1.0, bump_masses(40, -1.0, 1.0, 0.1, 0.5), Mat::Identity(1, 1));
  const auto k = InteractionKernel::quadratic_attractive();
  const double dt = local_cfl_dt(s, k, 1.0, 100.0);
  EXPECT_NO_THROW(step_local(s, k, dt));
  EXPECT_THROW(step_local(s, k, 4.0 * dt), PreconditionError);
}

TEST(SolveLocal, ZeroHorizon) {
  const LocalState s = local_line(20, -1.0, 1.0, bump_masses(20, -1.0, 1.0, 0.0, 0.5), Mat::Identity(1, 1));
  const Trajectory traj = solve_nlie_local(s, InteractionKernel::quadratic_attractive(), 0.0);
  ASSERT_EQ(traj.size(), 1u);
  for (std::size_t c = 0; c < 20; ++c) EXPECT_EQ(traj.states[0][c], s.masses()[c]);
}

TEST(SolveLocal, TimeRescaling) {
  const double c = 2.5;
  const auto masses = bump_masses(80, -2.0, 2.0, 0.3, 1.0);
  const auto k = InteractionKernel::quadratic_attractive();
  SolveOptions fast;
  fast.dt = DtPolicy::fixed(0.004);
  SolveOptions slow;
  slow.dt = DtPolicy::fixed(0.004 * c);
  const Trajectory a = solve_nlie_local(local_line(80, -2.0, 2.0, masses, c * Mat::Identity(1, 1)), k, 0.4, fast);
  const Trajectory b = solve_nlie_local(local_line(80, -2.0, 2.0, masses, Mat::Identity(1, 1)), k, 0.4 * c, slow);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    EXPECT_NEAR(a.times[n] * c, b.times[n], 1e-12);
    for (std::size_t i = 0; i < 80; ++i) EXPECT_NEAR(a.states[n][i], b.states[n][i], 1e-10);
  }
}

TEST(SolveLocal, TranslationByOneCell) {
  const std::size_t cells = 80;
  const auto masses = bump_masses(cells, -2.0, 2.0, -0.2, 0.8);
  std::vector<double> shifted(cells, 0.0);
  for (std::size_t i = 0; i + 1 < cells; ++i) shifted[i + 1] = masses[i];
  const auto k = InteractionKernel::quadratic_attractive();
  SolveOptions opt;
  opt.dt = DtPolicy::fixed(0.01);
  const Trajectory a = solve_nlie_local(local_line(cells, -2.0, 2.0, masses, Mat::Identity(1, 1)), k, 0.5, opt);
  const Trajectory b = solve_nlie_local(local_line(cells, -2.0, 2.0, shifted, Mat::Identity(1, 1)), k, 0.5, opt);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    for (std::size_t i = 0; i + 1 < cells; ++i) EXPECT_NEAR(b.states[n][i + 1], a.states[n][i], 1e-12);
  }
}

TEST(SolveLocal, CentreOfMassAndContraction) {
  // Mass symmetric about a cell centre: the centre of mass stays put.
  const auto k = InteractionKernel::quadratic_attractive();
  const LocalState s0 = local_line(100, -2.0, 2.0, bump_masses(100, -2.0, 2.0, 0.34, 1.2), Mat::Identity(1, 1));
  const Trajectory traj = solve_nlie_local(s0, k, 1.0);
  const double com0 = centre_of_mass(traj.positions, traj.states.front());
  double previous = centred_variance(traj.positions, traj.states.front());
  for (std::size_t n = 1; n < traj.size(); ++n) {
    EXPECT_NEAR(centre_of_mass(traj.positions, traj.states[n]), com0, 1e-10);
    const double var = centred_variance(traj.positions, traj.states[n]);
    EXPECT_LT(var, previous);
    previous = var;
    EXPECT_NEAR(traj.states[n].total(), 1.0, 1e-12);
    for (double m : traj.states[n].masses()) EXPECT_GE(m, 0.0);
  }
}

TEST(SolveLocal, CentreOfMassDriftIsFirstOrder) {
  // Asymmetric data: donor-cell faces move the centre of mass by O(h).
  const auto k = InteractionKernel::quadratic_attractive();
  std::vector<double> drift;
  for (std::size_t cells : {100, 200, 400}) {
    auto m = bump_masses(cells, -2.0, 2.0, 0.35, 1.2);
    const double h = 4.0 / static_cast<double>(cells);
    for (std::size_t c = 0; c < cells; ++c) {
      const double x = -2.0 + (static_cast<double>(c) + 0.5) * h;
      m[c] += std::exp(-(x + 0.9) * (x + 0.9) / 0.02);
    }
    const Trajectory traj = solve_nlie_local(local_line(cells, -2.0, 2.0, m, Mat::Identity(1, 1)), k, 1.0);
    const double com0 = centre_of_mass(traj.positions, traj.states.front());
    double worst = 0.0;
    for (const NodeMeasure& s : traj.states) worst = std::max(worst, std::abs(centre_of_mass(traj.positions, s) - com0));
    EXPECT_LE(worst, h);
    drift.push_back(worst);
  }
  EXPECT_LE(drift[1], 0.6 * drift[0]);
  EXPECT_LE(drift[2], 0.6 * drift[1]);
}

TEST(SolveLocal, TwoDimensionalConservation) {
  Mat T(2, 2);
  T << 2.0, 0.3, 0.3, 1.0;
  const CellGrid grid(Vec::Constant(2, -1.0), 0.1, {20, 20});
  std::vector<double> m(grid.num_cells());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = std::exp(-4.0 * (grid.center(c) - Vec{{0.2, -0.1}}).squaredNorm());
  const LocalState s0(grid, NodeMeasure(m).normalized(), TensorField::constant(T));
  SolveOptions opt;
  opt.record_fluxes = true;
  const Trajectory traj = solve_nlie_local(s0, InteractionKernel::gaussian(0.5), 0.2, opt);
  EXPECT_EQ(traj.cell_fluxes.size() + 1, traj.size());
  for (const NodeMeasure& s : traj.states) {
    EXPECT_NEAR(s.total(), 1.0, 1e-12);
    for (double v : s.masses()) EXPECT_GE(v, 0.0);
  }
}
