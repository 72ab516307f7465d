#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"

namespace surfora {

/// φ = EDT(¬vol) − EDT(vol): negative inside the foreground, positive outside.
/// With upsample_factor f > 1 the field is trilinearly resampled onto a grid
/// with spacing h/f covering the same extent.
ScalarField signed_distance_field(const VoxelGrid& mask, int upsample_factor = 1);

/// Trilinear resampling to (n-1)*f+1 samples per axis, spacing h/f.
ScalarField upsample(const ScalarField& field, int factor);

/// Separable Gaussian blur with replicated borders. sigma_nm <= 0 returns a copy.
ScalarField gaussian_smooth(const ScalarField& field, double sigma_nm);

struct FlowParams {
  double gaussian_sigma_nm = -1.0;  // negative: one voxel of the field grid
  int steps = 10;
  double dt = -1.0;                 // nm^2; non-positive: 0.8 * h^2 / 6
  int upsample_factor = 1;
  double grad_epsilon = 1e-8;       // nm

  void validate() const;
};

/// Largest explicit step allowed for mean-curvature flow on this grid.
double max_stable_dt(const GridGeometry& grid);

/// Pre-smoothing followed by `steps` explicit mean-curvature-flow updates, each
/// followed by φ ← max(φ, φ_ref). The result satisfies φ ≥ φ_ref everywhere.
ScalarField mean_curvature_flow(const ScalarField& field, const ScalarField& ref_field,
                                const FlowParams& params = {});

/// One explicit update of φ + dt |∇φ| div(∇φ/|∇φ|), central differences.
ScalarField curvature_flow_step(const ScalarField& field, double dt, double grad_epsilon);

/// Trilinear interpolation at p (nm). Points outside the grid are clamped and
/// `clamped` (if given) is set.
double sample_field(const ScalarField& field, const Vec3& p, bool* clamped = nullptr);

/// Central-difference gradient at p (nm^-1 units of the field per nm).
Vec3 sample_gradient(const ScalarField& field, const Vec3& p);

/// Triangulated iso level. Face normals point toward increasing values.
/// A level outside the value range gives an empty mesh.
TriangleMesh marching_cubes(const ScalarField& field, double iso = 0.0);

}  // namespace surfora
