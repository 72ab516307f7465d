#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"
#include "surfora/point_cloud.hpp"

#include <string>
#include <vector>

namespace surfora {

struct MeshParams {
  std::vector<double> radii_nm;  // empty: auto scan
  std::vector<double> radius_multipliers{1.0, 1.5, 2.0, 3.0};
  double gap_dist_nm = 2.0;
  double sat_tolerance_nm = 0.0;
  int poisson_depth = 7;
  double density_trim_quantile = 0.01;
  double smooth_lambda = 0.5;
  int smooth_iterations = 0;

  void validate() const;
};

/// Radii actually used: the explicit list, or multipliers x median NN spacing.
std::vector<double> resolve_radii(const PointCloud& cloud, const MeshParams& params);

struct BallPivotStats {
  std::vector<double> radii;
  std::vector<int> faces_per_radius;
  int seeds = 0;
};

/// Multi-radius ball pivoting. Faces are wound so that their normals agree with
/// the vertex normals. Throws "radius scan failed" when no seed triangle exists.
TriangleMesh ball_pivot(const PointCloud& cloud, const MeshParams& params, BallPivotStats* stats = nullptr);

/// Exact triangle / axis-aligned box overlap (13 separating axes).
bool triangle_box_overlap(const Vec3& box_center, const Vec3& half_size, const Vec3& a, const Vec3& b, const Vec3& c);

struct GapFilterStats {
  int gap_voxels = 0;
  int removed_sat = 0;
  int removed_label = 0;
  int removed_isolated = 0;
};

/// Gap voxels: background voxels at distance >= gap_dist_nm from the foreground.
VoxelGrid gap_voxels(const VoxelGrid& occupancy, double gap_dist_nm);

/// Occupancy raster of a dense cloud at the given voxel size (<= 0: median NN
/// spacing), padded so that gaps next to the cloud are representable.
VoxelGrid rasterize_cloud(const PointCloud& cloud, double voxel_nm, double pad_nm);

/// Removes faces overlapping a gap voxel (box shrunk by sat_tolerance_nm), faces
/// joining different labels, then faces sharing no edge with another face.
TriangleMesh gap_filter(const TriangleMesh& mesh, const VoxelGrid& support, const MeshParams& params,
                        GapFilterStats* stats = nullptr);
TriangleMesh gap_filter(const TriangleMesh& mesh, const PointCloud& support, const MeshParams& params,
                        GapFilterStats* stats = nullptr);

struct PoissonStats {
  int iterations = 0;
  double relative_residual = 0.0;
  double iso_value = 0.0;
  Vec3i dims{0, 0, 0};
  int trimmed_vertices = 0;
};

/// Indicator-function reconstruction on a regular grid. The result carries a
/// "density" channel and outward vertex normals.
TriangleMesh poisson_reconstruct(const PointCloud& cloud, const MeshParams& params, PoissonStats* stats = nullptr);

/// v <- v + lambda (mean of neighbours - v) on interior vertices; boundary fixed.
TriangleMesh damped_laplacian_smooth(const TriangleMesh& mesh, const MeshParams& params);

/// Mesh vertices with vertex normals as an oriented cloud.
PointCloud mesh_to_cloud(const TriangleMesh& mesh);

}  // namespace surfora
