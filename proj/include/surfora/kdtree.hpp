#pragma once

#include "surfora/grid.hpp"

#include <vector>

namespace surfora {

struct Neighbor {
  int index;
  double dist2;
};

/// Static 3-d tree over a point array. Query results are sorted by
/// (distance, index) so ties resolve deterministically.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& points, int leaf_size = 12);

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// k nearest points to q; `skip` (if >= 0) is excluded from the result.
  std::vector<Neighbor> knn(const Vec3& q, int k, int skip = -1) const;

  /// All points with |p - q| <= r.
  std::vector<Neighbor> radius(const Vec3& q, double r) const;

  /// Nearest point; -1 on an empty tree.
  Neighbor nearest(const Vec3& q, int skip = -1) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int begin, end;    // range in order_
    int left = -1, right = -1;
  };

  int build(int begin, int end);
  static double box_dist2(const Node& n, const Vec3& q);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_ = 12;
};

/// Distance from each point to its nearest other point.
std::vector<double> nearest_neighbor_distances(const KdTree& tree);

/// Mean distance to the k-th nearest neighbour over all points.
double mean_knn_distance(const KdTree& tree, int k);

double median(std::vector<double> values);

}  // namespace surfora
