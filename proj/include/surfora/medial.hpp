#pragma once

#include "surfora/grid.hpp"
#include "surfora/point_cloud.hpp"

#include <cstdint>
#include <vector>

namespace surfora {

struct MedialParams {
  int k_neighbors = 20;
  int mls_iterations = 3;
  double spacing_min_nm = -1.0;  // non-positive: 0.5 voxel
  double spacing_max_nm = -1.0;  // non-positive: 2 voxels
  double thickness_factor = 0.75;
  int min_component_size = 10;
  std::uint64_t rng_seed = 0;
  // Target spacing is curvature_spacing_factor / k_max before clamping.
  double curvature_spacing_factor = 0.1;
  // MLS neighbourhood radius in units of the mean k-NN distance.
  double mls_radius_factor = 2.5;

  /// Copy with voxel-relative defaults filled in.
  MedialParams resolved(double voxel_nm) const;
  void validate() const;
};

/// One point per foreground voxel at its world centre, in linear-index order.
PointCloud voxels_to_points(const VoxelGrid& mask);

/// Moving least-squares projection onto the surface sampled by `reference`
/// (the input itself when null). Each pass: Gaussian-weighted PCA frame,
/// quadratic height fit, vertical projection onto the fit. Points with an
/// unusable neighbourhood stay put and are flagged.
PointCloud mls_project(const PointCloud& cloud, const MedialParams& params, const PointCloud* reference = nullptr,
                       std::vector<bool>* flagged = nullptr);

/// Tangent-plane hex-lattice candidates around Poisson-thinned seeds, spacing
/// clamp(C / k_max, s_min, s_max), lifted onto the local quadratic and kept
/// only inside foreground voxels. Adds "spacing" and "k_max" attributes.
PointCloud curvature_adaptive_densify(const PointCloud& cloud, const VoxelGrid& mask, const MedialParams& params);

/// Drops points far from their neighbourhood fit, then keeps one sheet where
/// several stacked layers overlap.
PointCloud enforce_single_layer(const PointCloud& cloud, const MedialParams& params);

/// Indices (in canonical coordinate order) of a maximal subset in which any two
/// points are at least min(r_i, r_j) apart. Independent of input order.
std::vector<int> poisson_disc_indices(const std::vector<Vec3>& points, const std::vector<double>& radii,
                                      std::uint64_t seed);

PointCloud poisson_disc_homogenize(const PointCloud& cloud, const std::vector<double>& radii, std::uint64_t seed);
PointCloud poisson_disc_homogenize(const PointCloud& cloud, double radius_nm, std::uint64_t seed);

/// Drops components (adjacency |p_i - p_j| <= 2 max(r_i, r_j)) with fewer than min_size points.
PointCloud remove_small_components(const PointCloud& cloud, const std::vector<double>& radii, int min_size);

/// Full mid-surface extraction from a thick binary segmentation.
PointCloud extract_medial_surface(const VoxelGrid& mask, const MedialParams& params = {});

}  // namespace surfora
