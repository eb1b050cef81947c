#pragma once

#include "nlie/types.hpp"

#include <cstddef>
#include <vector>

namespace nlie {

/// Uniform box of cubic cells. Cell k has center lower + (k + 1/2) h per axis;
/// linear index is lexicographic with axis 0 fastest.
struct CellGrid {
  Vec lower;
  double h = 1.0;
  std::vector<std::size_t> counts;

  CellGrid() = default;
  CellGrid(Vec lower_corner, double spacing, std::vector<std::size_t> cell_counts);

  /// Grid of cubes of side h covering [lo, hi] (counts rounded to the nearest integer).
  static CellGrid covering(const Vec& lo, const Vec& hi, double h);

  int dim() const { return static_cast<int>(counts.size()); }
  std::size_t num_cells() const;
  std::size_t stride(int axis) const;
  double cell_volume() const;

  std::vector<std::size_t> multi_index(std::size_t cell) const;
  std::size_t linear_index(const std::vector<std::size_t>& idx) const;
  Vec center(std::size_t cell) const;
  PointSet centers() const;
  Vec upper() const;

  /// Cell containing x, or num_cells() when x lies outside the box.
  std::size_t locate(const Vec& x) const;
};

}  // namespace nlie
