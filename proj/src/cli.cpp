#include "nlie/cli.hpp"

#include "nlie/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace nlie {
namespace {

using nlohmann::json;

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::string matrix_text(const Mat& m) {
  std::ostringstream s;
  s << std::setprecision(6) << '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) s << "; ";
    for (Eigen::Index c = 0; c < m.cols(); ++c) s << (c ? " " : "") << m(r, c);
  }
  s << ']';
  return s.str();
}

// Constant-shape connectivities only; the ball is D = Id.
std::optional<Mat> closed_form_tensor(const ExperimentConfig& config, const Vec& x) {
  const json& c = config.connectivity;
  const int d = config.dimension;
  const double radius = c.value("radius", 1.0);
  Mat shape = Mat::Identity(d, d);
  double norm = 0.0;
  const std::string type = c.value("type", "");
  if (type == "ball") {
    norm = c.value("value", 1.0);
  } else if (type == "anisotropic") {
    for (int r = 0; r < d; ++r) {
      for (int k = 0; k < d; ++k) shape(r, k) = c.at("shape").at(r).at(k).get<double>();
    }
    const json& nj = c.at("normalization");
    norm = nj.is_string() ? identity_normalization(shape, radius) : nj.get<double>();
  } else {
    return std::nullopt;
  }
  return config.make_base().density(x) * tensor_closed_form(shape, radius, norm);
}

std::filesystem::path out_dir(const ExperimentConfig& config) {
  std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_run(const std::filesystem::path& dir, const std::string& stem, const Trajectory& traj,
               const std::string& hash) {
  std::ofstream csv(dir / (stem + ".csv"));
  write_trajectory_csv(csv, traj);
  std::ofstream meta(dir / (stem + ".json"));
  write_trajectory_metadata(meta, traj, hash);
}

double pick_eps(const ExperimentConfig& config, const std::optional<double>& eps) {
  if (!eps) return config.eps_list.front();
  if (!(*eps > 0.0)) throw ConfigError("--eps must be positive");
  return *eps;
}

int cmd_tensor(const ExperimentConfig& config, std::ostream& out) {
  const TensorField limit = config.limit_tensor();
  out << "eps,node,x,T_eps,T,T_closed,rel_err_eps,rel_err_closed\n";
  for (double eps : config.eps_list) {
    const auto graph = config.make_graph(eps);
    const double margin = config.make_connectivity().support_radius() * eps;
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < graph->num_nodes(); ++i) {
      const Vec x = graph->node(i);
      bool ok = true;
      for (int a = 0; a < config.dimension; ++a) {
        ok = ok && x[a] - config.box_lower[a] >= margin && config.box_upper[a] - x[a] >= margin;
      }
      if (ok) interior.push_back(i);
    }
    if (interior.empty()) {
      out << num(eps) << ",none,,,,,,\n";
      continue;
    }
    const std::size_t samples = std::min<std::size_t>(5, interior.size());
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t i = interior[samples == 1 ? interior.size() / 2 : s * (interior.size() - 1) / (samples - 1)];
      const Vec x = graph->node(i);
      const Mat te = tensor_eps(*graph, i);
      const Mat tl = limit(x);
      const auto tc = closed_form_tensor(config, x);
      out << num(eps) << ',' << i << ',' << matrix_text(x.transpose()) << ',' << matrix_text(te) << ','
          << matrix_text(tl) << ',' << (tc ? matrix_text(*tc) : "n/a") << ',' << num((te - tl).norm() / tl.norm())
          << ',' << (tc ? num((tl - *tc).norm() / tc->norm()) : "n/a") << '\n';
    }
  }
  return 0;
}

int cmd_simulate(const ExperimentConfig& config, bool local, const std::optional<double>& eps_opt,
                 std::ostream& out) {
  config.validate();
  const InteractionKernel kernel = config.make_kernel();
  const auto dir = out_dir(config);
  if (local) {
    const Trajectory traj = solve_nlie_local(config.make_local_state(), kernel, config.t_end, config.solve_options(false));
    write_run(dir, "local", traj, config.hash());
    out << "local run: " << traj.positions.cols() << " cells, " << traj.size() << " snapshots -> "
        << (dir / "local.csv").string() << '\n';
    return 0;
  }
  const double eps = pick_eps(config, eps_opt);
  const auto graph = config.make_graph(eps);
  const Trajectory traj =
      solve_nl2ie(config.initial_measure(graph->nodes()), *graph, kernel, config.t_end, config.solve_options(true));
  const std::string stem = "graph_eps_" + num(eps);
  write_run(dir, stem, traj, config.hash());
  std::ofstream ledger(dir / (stem + "_ledger.csv"));
  dissipation_ledger(traj, kernel, *graph).write_csv(ledger);
  out << "graph run eps=" << num(eps) << ": " << graph->num_nodes() << " nodes, " << traj.fluxes.size()
      << " steps -> " << (dir / (stem + ".csv")).string() << '\n';
  return 0;
}

int cmd_converge(const ExperimentConfig& config, std::ostream& out) {
  const ConvergenceReport report = run_convergence_sweep(config, true);
  out << "eps,h,nodes,steps";
  for (double t : report.snapshot_times) out << ",err(t=" << num(t) << ')';
  out << ",de_giorgi\n";
  for (const SweepRow& r : report.rows) {
    out << num(r.eps) << ',' << num(r.h) << ',' << r.nodes << ',' << r.steps;
    for (double e : r.errors) out << ',' << num(e);
    out << ',' << num(r.de_giorgi) << '\n';
  }
  out << "errors decreasing: " << (report.errors_decreasing ? "yes" : "no") << '\n';
  out << "report: " << (std::filesystem::path(config.out_dir) / "report.json").string() << '\n';
  return 0;
}

int cmd_dissipation(const ExperimentConfig& config, const std::string& path, const std::optional<double>& eps_opt,
                    std::ostream& out) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory '" + path + "'");
  Trajectory traj = read_trajectory_csv(in);
  const double eps = pick_eps(config, eps_opt);
  const auto graph = config.make_graph(eps);
  if (traj.positions.cols() != graph->nodes().cols() || traj.positions.rows() != graph->nodes().rows() ||
      (traj.positions - graph->nodes()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ConfigError("trajectory '" + path + "' does not match the graph for eps = " + num(eps));
  }
  const InteractionKernel kernel = config.make_kernel();
  traj.fluxes.clear();
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    traj.fluxes.push_back(upwind_flux(traj.states[k], *graph, velocity_field(kernel, traj.states[k], *graph)));
  }
  const DissipationLedger ledger = dissipation_ledger(traj, kernel, *graph);
  const auto dir = out_dir(config);
  const auto target = dir / (std::filesystem::path(path).stem().string() + "_ledger.csv");
  std::ofstream csv(target);
  ledger.write_csv(csv);
  out << "records: " << ledger.records.size() << "\nde_giorgi: " << num(ledger.de_giorgi)
      << "\nmax_chain_rule_residual: " << num(ledger.max_chain_rule_residual) << "\nledger: " << target.string()
      << '\n';
  return 0;
}

int cmd_validate(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  SamplePlan plan;
  const int per_axis = 5;
  std::vector<std::size_t> counts(static_cast<std::size_t>(config.dimension), per_axis);
  const Vec span = config.box_upper - config.box_lower;
  const PointSet pts = lattice_points(config.box_lower + span / (2.0 * per_axis), span.minCoeff() / per_axis, counts);
  for (Eigen::Index c = 0; c < pts.cols(); ++c) {
    plan.z_points.push_back(pts.col(c));
    plan.x_points.push_back(pts.col(c));
  }
  const AssumptionReport report = validate_assumptions(config.make_connectivity(), config.make_base(), plan);
  for (const AssumptionCheck& c : report.checks) {
    out << (c.passed ? "ok   " : "FAIL ") << c.name << " = " << num(c.value);
    if (!c.detail.empty()) out << "  (" << c.detail << ')';
    out << '\n';
  }
  out << "C_supp=" << num(report.C_supp) << " C_mom=" << num(report.C_mom) << " c_mu=" << num(report.c_mu)
      << " C_mu=" << num(report.C_mu) << " C_int=" << num(report.C_int) << '\n';
  for (double eps : config.eps_list) {
    out << "eps=" << num(eps) << " h=" << num(config.graph_spacing(eps)) << '\n';
  }
  out << "config hash " << config.hash() << '\n';
  return report.all_passed() ? 0 : 3;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonlocal interaction equation on localizing graphs", "nlie"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_override;
  std::optional<double> eps;
  std::string trajectory;
  bool local = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment configuration")->required();
    sub->add_option("--out", out_override, "output directory (overrides out_dir)");
  };
  auto* tensor = app.add_subcommand("tensor", "compare T^eps with the limit tensor and its closed form");
  auto* simulate = app.add_subcommand("simulate", "one graph run, or the local reference with --local");
  auto* converge = app.add_subcommand("converge", "full eps sweep against the local reference");
  auto* dissipation = app.add_subcommand("dissipation", "dissipation ledger for a stored graph trajectory");
  auto* validate = app.add_subcommand("validate", "empirical assumption report");
  for (auto* sub : {tensor, simulate, converge, dissipation, validate}) common(sub);
  simulate->add_flag("--local", local, "run the local tensor-mobility solver");
  simulate->add_option("--eps", eps, "graph scale (default: first of eps_list)");
  dissipation->add_option("--trajectory", trajectory, "trajectory CSV written by simulate")->required();
  dissipation->add_option("--eps", eps, "graph scale of the trajectory (default: first of eps_list)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
      err << "unknown subcommand '" << argv[1] << "'\n\n" << app.help();
      return 2;
    }
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    ExperimentConfig config = ExperimentConfig::load(config_path);
    if (!out_override.empty()) config.out_dir = out_override;
    if (tensor->parsed()) return cmd_tensor(config, out);
    if (simulate->parsed()) return cmd_simulate(config, local, eps, out);
    if (converge->parsed()) return cmd_converge(config, out);
    if (dissipation->parsed()) return cmd_dissipation(config, trajectory, eps, out);
    return cmd_validate(config, out);
  } catch (const PreconditionError& e) {
    err << "precondition failed: " << e.what() << '\n';
    return 3;
  } catch (const UnsupportedSizeError& e) {
    err << "unsupported size: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cli_main(int argc, const char* const* argv) { return cli_main(argc, argv, std::cout, std::cerr); }

}  // namespace nlie
