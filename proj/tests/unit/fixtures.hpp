#pragma once

#include "nlie/geometry.hpp"

#include <initializer_list>
#include <random>
#include <vector>

namespace nlie::test {

inline PointSet line(std::initializer_list<double> xs) {
  PointSet p(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) p(0, k++) = x;
  return p;
}

/// Graph with hand-picked weights; mu defaults to 1 per node.
inline EpsGraph manual_graph(const PointSet& nodes, std::vector<UndirectedEdge> edges, std::vector<double> mu = {}) {
  if (mu.empty()) mu.assign(static_cast<std::size_t>(nodes.cols()), 1.0);
  return EpsGraph(1.0, nodes, std::move(mu), std::move(edges), 1.0);
}

inline EpsGraph uniform_line_graph(double lo, double h, std::size_t n, double eps) {
  return build_graph(lattice_points(Vec::Constant(1, lo), h, {n}), BaseMeasureSpec::uniform(1.0),
                     ConnectivitySpec::ball(1), eps, h);
}

inline std::vector<double> random_masses(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> m(n);
  double total = 0.0;
  for (double& v : m) total += (v = u(rng));
  for (double& v : m) v /= total;
  return m;
}

}  // namespace nlie::test
