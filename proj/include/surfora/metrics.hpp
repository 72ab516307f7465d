#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"

#include <string>
#include <utility>
#include <vector>

namespace surfora {

struct DistanceReport {
  std::vector<Vec3> queries;
  std::vector<double> distance;  // per query, nm
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
  std::string source, target;
};

/// Exact Euclidean distance from each query to the closest point of the target surface.
DistanceReport point_to_mesh_distance(const std::vector<Vec3>& queries, const TriangleMesh& target);

/// Brute-force reference: scans every face.
double brute_force_distance(const Vec3& q, const TriangleMesh& target);

struct CurvatureParams {
  std::vector<double> radii_nm{3.0, 6.0, 9.0, 12.0};
  double delta_rel = 0.05;
  double delta_abs = 1e-4;  // nm^-1
  double epsilon = 1e-6;
  int min_neighbors = 8;
  double heat_time_factor = 1.0;

  /// Defaults scaled to the voxel size: radii {3, 6, 9, 12} x voxel.
  static CurvatureParams for_voxel(double voxel_nm);
  void validate() const;
};

struct CurvatureReport {
  std::vector<double> H, K, r_used, confidence;  // NaN where excluded
  std::vector<bool> boundary_excluded;
  std::vector<bool> low_confidence;
  std::vector<bool> excluded;  // no finite estimate at any radius
  std::vector<int> neighbors;  // vertices within the largest radius
};

/// Smallest radius whose estimate agrees with the previous one; otherwise the
/// largest radius with a finite estimate. Index -1 (r = NaN) when none is finite.
std::pair<double, int> select_stable_radius(const std::vector<double>& H_per_radius, const CurvatureParams& params);

double curvature_confidence(double residual_rms, double H, double r_used, int neighbors, const CurvatureParams& params);

/// Signed Monge curvature per vertex. Positive H bends away from the normal
/// (outward bending); boundary vertices are excluded.
CurvatureReport curvature_monge(const TriangleMesh& mesh, const CurvatureParams& params = {});

/// Adds H, K, r_used and confidence as vertex channels.
void attach_curvature(TriangleMesh& mesh, const CurvatureReport& report);

}  // namespace surfora
