#include "nlie/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace nlie {

CellGrid::CellGrid(Vec lower_corner, double spacing, std::vector<std::size_t> cell_counts)
    : lower(std::move(lower_corner)), h(spacing), counts(std::move(cell_counts)) {
  if (!(h > 0.0)) throw std::invalid_argument("cell spacing must be positive");
  if (counts.empty()) throw std::invalid_argument("grid needs at least one axis");
  if (lower.size() != static_cast<Eigen::Index>(counts.size())) {
    throw std::invalid_argument("grid corner dimension mismatch");
  }
  for (std::size_t c : counts) {
    if (c == 0) throw std::invalid_argument("grid axis with zero cells");
  }
}

CellGrid CellGrid::covering(const Vec& lo, const Vec& hi, double h) {
  if (lo.size() != hi.size()) throw std::invalid_argument("box corner dimension mismatch");
  std::vector<std::size_t> counts(static_cast<std::size_t>(lo.size()));
  for (Eigen::Index a = 0; a < lo.size(); ++a) {
    const double n = std::round((hi[a] - lo[a]) / h);
    if (!(n >= 1.0)) throw std::invalid_argument("box is thinner than one cell");
    counts[static_cast<std::size_t>(a)] = static_cast<std::size_t>(n);
  }
  return CellGrid(lo, h, std::move(counts));
}

std::size_t CellGrid::num_cells() const {
  std::size_t n = 1;
  for (std::size_t c : counts) n *= c;
  return n;
}

std::size_t CellGrid::stride(int axis) const {
  std::size_t s = 1;
  for (int a = 0; a < axis; ++a) s *= counts[static_cast<std::size_t>(a)];
  return s;
}

double CellGrid::cell_volume() const { return std::pow(h, dim()); }

std::vector<std::size_t> CellGrid::multi_index(std::size_t cell) const {
  std::vector<std::size_t> idx(counts.size());
  for (std::size_t a = 0; a < counts.size(); ++a) {
    idx[a] = cell % counts[a];
    cell /= counts[a];
  }
  return idx;
}

std::size_t CellGrid::linear_index(const std::vector<std::size_t>& idx) const {
  std::size_t p = 0;
  for (std::size_t a = counts.size(); a-- > 0;) p = p * counts[a] + idx[a];
  return p;
}

Vec CellGrid::center(std::size_t cell) const {
  const auto idx = multi_index(cell);
  Vec c(dim());
  for (int a = 0; a < dim(); ++a) c[a] = lower[a] + (static_cast<double>(idx[static_cast<std::size_t>(a)]) + 0.5) * h;
  return c;
}

PointSet CellGrid::centers() const {
  PointSet pts(dim(), static_cast<Eigen::Index>(num_cells()));
  for (std::size_t c = 0; c < num_cells(); ++c) pts.col(static_cast<Eigen::Index>(c)) = center(c);
  return pts;
}

Vec CellGrid::upper() const {
  Vec u(dim());
  for (int a = 0; a < dim(); ++a) u[a] = lower[a] + h * static_cast<double>(counts[static_cast<std::size_t>(a)]);
  return u;
}

std::size_t CellGrid::locate(const Vec& x) const {
  std::vector<std::size_t> idx(counts.size());
  for (int a = 0; a < dim(); ++a) {
    const double t = std::floor((x[a] - lower[a]) / h);
    if (t < 0.0 || t >= static_cast<double>(counts[static_cast<std::size_t>(a)])) return num_cells();
    idx[static_cast<std::size_t>(a)] = static_cast<std::size_t>(t);
  }
  return linear_index(idx);
}

}  // namespace nlie
