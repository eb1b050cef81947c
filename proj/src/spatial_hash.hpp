#pragma once

#include "nlie/types.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace nlie::detail {

/// Uniform bucket grid over a point set. Bucket keys are integer coordinates
/// floor(x / bucket); lookups visit the 3^d buckets around a point.
class SpatialHash {
 public:
  SpatialHash(const PointSet& points, double bucket) : points_(points), bucket_(bucket) {
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      table_[key_of(points.col(i))].push_back(static_cast<std::size_t>(i));
    }
  }

  /// Indices of all points in buckets adjacent to `x`, in increasing order
  /// within each bucket and buckets visited in a fixed order.
  template <typename Visitor>
  void for_each_candidate(const Vec& x, Visitor&& visit) const {
    const Key center = key_of(x);
    const int d = static_cast<int>(center.size());
    Key probe(center);
    std::vector<int> offset(d, -1);
    while (true) {
      for (int a = 0; a < d; ++a) probe[a] = center[a] + offset[a];
      if (auto it = table_.find(probe); it != table_.end()) {
        for (std::size_t j : it->second) visit(j);
      }
      int a = 0;
      while (a < d && offset[a] == 1) offset[a++] = -1;
      if (a == d) break;
      ++offset[a];
    }
  }

 private:
  using Key = std::vector<std::int64_t>;

  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::size_t h = 1469598103934665603ull;
      for (std::int64_t v : k) {
        h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      }
      return h;
    }
  };

  template <typename Derived>
  Key key_of(const Eigen::MatrixBase<Derived>& x) const {
    Key k(static_cast<std::size_t>(x.size()));
    for (Eigen::Index a = 0; a < x.size(); ++a) {
      k[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::floor(x[a] / bucket_));
    }
    return k;
  }

  const PointSet& points_;
  double bucket_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> table_;
};

}  // namespace nlie::detail
