#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"

#include <vector>

namespace surfora {

/// Closest point to p on triangle abc (Voronoi-region walk).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct ClosestHit {
  int face = -1;
  Vec3 point = Vec3::Zero();
  double dist2 = 0.0;
};

/// Axis-aligned bounding-volume hierarchy over the faces of a mesh.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriangleMesh& mesh, int leaf_size = 4);

  /// Exact closest point on the surface; ties keep the lowest face index.
  ClosestHit closest(const Vec3& p) const;

  /// Face indices whose boxes overlap [lo, hi].
  std::vector<int> overlapping(const Vec3& lo, const Vec3& hi) const;

  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Vec3 lo, hi;
    int begin, end;
    int left = -1, right = -1;
  };
  int build(int begin, int end);

  const TriangleMesh& mesh_;
  std::vector<int> order_;
  std::vector<Vec3> centroid_;
  std::vector<Node> nodes_;
  int leaf_size_;
};

}  // namespace surfora
