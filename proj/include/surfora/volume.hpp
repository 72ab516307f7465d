#pragma once

#include "surfora/grid.hpp"

#include <cstdint>
#include <vector>

namespace surfora {

// ---------------------------------------------------------------------------
// Distance transforms
// ---------------------------------------------------------------------------

/// Exact squared Euclidean distance (nm^2) from every voxel center to the
/// nearest voxel flagged in `sites`. Separable lower-envelope transform.
/// When `border_sites` is set the volume behaves as if surrounded by one
/// layer of site voxels, which keeps distances finite.
/// Voxels with no reachable site get +infinity.
std::vector<double> squared_distance_to_sites(const GridGeometry& grid,
                                              const std::vector<std::uint8_t>& sites,
                                              bool border_sites);

/// Distance (nm) from each foreground voxel to the nearest background voxel
/// center, 0 on background. The volume is padded with one background layer.
ScalarField euclidean_distance_transform(const VoxelGrid& mask);

/// Distance (nm) from each background voxel to the nearest foreground voxel,
/// 0 on foreground, +infinity everywhere when the mask is empty.
ScalarField distance_to_foreground(const VoxelGrid& mask);

// ---------------------------------------------------------------------------
// Morphology
// ---------------------------------------------------------------------------

/// Ball structuring element: offsets with |offset|_nm <= radius_vox * min spacing.
VoxelGrid binary_dilate(const VoxelGrid& mask, int radius_vox);

/// Out-of-volume voxels count as foreground, so objects touching the border
/// are not eaten from outside.
VoxelGrid binary_erode(const VoxelGrid& mask, int radius_vox);

/// Opening followed by closing with a discrete Euclidean ball.
VoxelGrid binary_open_close(const VoxelGrid& mask, int radius_vox);

// ---------------------------------------------------------------------------
// Labelling
// ---------------------------------------------------------------------------

enum class Connectivity { Face = 6, Edge = 18, Vertex = 26 };

Connectivity connectivity_from_int(int n);

/// Offsets of the 6/18/26 neighbourhood.
std::vector<Vec3i> neighbourhood(Connectivity c);

/// Unique labels 1..L ordered by the smallest linear index of each component.
LabelMask connected_components(const VoxelGrid& mask, Connectivity connectivity = Connectivity::Vertex);

struct WatershedParams {
  double min_seed_dist_nm = 10.0;
  Connectivity connectivity = Connectivity::Vertex;
};

struct WatershedResult {
  LabelMask labels;
  int num_labels = 0;
  int num_seeds = 0;
  bool degenerate = false;  // no seeds: plain component labelling returned
};

/// Seeded watershed on the negated distance transform. Seeds are EDT local
/// maxima, picked greedily by height, at least min_seed_dist_nm apart within
/// one connected component.
WatershedResult watershed_split(const VoxelGrid& mask, const WatershedParams& params = {});

/// Relabels so labels are contiguous 1..L in order of first voxel occurrence.
LabelMask relabel_sequential(const LabelMask& labels);

// ---------------------------------------------------------------------------
// Overlap metrics and ROI restriction
// ---------------------------------------------------------------------------

struct OverlapScores {
  double dice = 0.0;
  double iou = 0.0;
  bool both_empty = false;  // both scores defined as 1.0
};

OverlapScores dice_iou(const VoxelGrid& a, const VoxelGrid& b);

/// Foreground of `segmentation` inheriting the ROI label it falls in.
LabelMask restrict_to_roi(const VoxelGrid& segmentation, const LabelMask& rois);

}  // namespace surfora
