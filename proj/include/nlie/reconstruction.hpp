#pragma once

// Local vector flux from a graph edge flux by superposing segment measures
// ("needles") along every edge.

#include "nlie/calculus.hpp"
#include "nlie/geometry.hpp"
#include "nlie/grid.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace nlie {

struct CellVectorFlux {
  CellGrid grid;
  Mat vectors;  ///< d x num_cells

  /// sum over cells of |vector|.
  double total_variation() const;
  CellVectorFlux operator+(const CellVectorFlux& other) const;

  /// CSV with header `cell_id,x1..xd,v1..vd`.
  void write_csv(std::ostream& out) const;
};

/// Every ordered edge (i, j) deposits 1/2 eta_ij J_ij nu_ij |[x_i, x_j] cap A|
/// into each cell A, nu_ij the unit vector from x_i to x_j. Throws
/// std::out_of_range naming the edge when a segment leaves the grid.
CellVectorFlux reconstruct_local_flux(const EdgeField& j, const EpsGraph& graph, const CellGrid& grid);

/// 1/2 sum over ordered edges |x_i - x_j| eta_ij |J_ij|, the needle mass.
double needle_mass(const EdgeField& j, const EpsGraph& graph);

struct TestFunction {
  std::string label;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;

  /// a . x
  static TestFunction linear(const Vec& a);
  /// 1/2 x^T H x + b . x with symmetric H
  static TestFunction quadratic(const Mat& H, const Vec& b);
  /// prod_a (1 - ((x_a - c_a)/r)^2)^2 inside the cube, 0 outside (C^1)
  static TestFunction bump(const Vec& center, double radius);
  /// sin(k . x + phase)
  static TestFunction trigonometric(const Vec& k, double phase = 0.0);
};

/// A few fixed members of each family in dimension d.
std::vector<TestFunction> linear_family(int dim);
std::vector<TestFunction> quadratic_family(int dim);
std::vector<TestFunction> bump_family(int dim);
std::vector<TestFunction> trigonometric_family(int dim);

/// |1/2 sum_ij (phi_j - phi_i) eta_ij J_ij - sum_cells grad phi(center) . vector|
/// for every test function.
std::vector<double> divergence_identity_errors(const EdgeField& j, const EpsGraph& graph, const CellVectorFlux& jhat,
                                               const std::vector<TestFunction>& tests);

/// Largest entry of divergence_identity_errors.
double divergence_identity_check(const EdgeField& j, const EpsGraph& graph, const CellVectorFlux& jhat,
                                 const std::vector<TestFunction>& tests);

}  // namespace nlie
