#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"
#include "surfora/point_cloud.hpp"

#include <cstdint>

namespace surfora::phantom {

/// Cubic grid of n^3 voxels of size h, origin 0.
GridGeometry cube_grid(int n, double voxel_nm = 1.0);

/// Grid centre in world coordinates.
Vec3 grid_center(const GridGeometry& g);

/// Voxels with |‖p - c‖ - R| <= thickness / 2.
VoxelGrid sphere_shell(const GridGeometry& g, const Vec3& c, double radius, double thickness);

/// Solid ball ‖p - c‖ <= R.
VoxelGrid ball(const GridGeometry& g, const Vec3& c, double radius);

/// Upper half (z >= c.z) of a spherical shell.
VoxelGrid hemisphere_shell(const GridGeometry& g, const Vec3& c, double radius, double thickness);

/// Two flat sheets normal to z, centred at z = c.z -/+ separation/2, each
/// `thickness` thick and limited to |x - c.x|, |y - c.y| <= half_extent.
VoxelGrid two_sheets(const GridGeometry& g, const Vec3& c, double separation, double thickness,
                     double half_extent);

/// Membrane contact site: two coaxial cylindrical sheet sections (axis along y
/// through `axis_point`) at radii r_inner and r_inner + separation, spanning
/// |angle| <= half_angle around -z, clipped to |y - axis.y| <= half_length.
struct McsPhantom {
  VoxelGrid membrane;  // binary, both sheets
  LabelMask rois;      // one box (label 1) around the contact site
  double separation = 0.0;
  Vec3 axis_point = Vec3::Zero();
  double r_inner = 0.0;
};
McsPhantom mcs(const GridGeometry& g, double separation, double thickness, double r_inner, double half_angle,
               double half_length);

// Point clouds with exact outward normals.
PointCloud fibonacci_sphere(int n, double radius, const Vec3& c = Vec3::Zero());
PointCloud fibonacci_hemisphere(int n, double radius, const Vec3& c = Vec3::Zero());
PointCloud cylinder_cloud(int n_around, int n_along, double radius, double length);
PointCloud torus_cloud(int n_major, int n_minor, double major, double minor);
PointCloud plane_cloud(int nx, int ny, double spacing, double z = 0.0);

// Triangle meshes with exact outward vertex normals.
TriangleMesh icosphere(double radius, int subdivisions, const Vec3& c = Vec3::Zero());
TriangleMesh cylinder_mesh(double radius, double length, int n_around, int n_along);
TriangleMesh plane_mesh(int nx, int ny, double spacing, double z = 0.0);

/// Flips each normal independently with probability 1/2.
void randomize_signs(PointCloud& cloud, std::uint64_t seed);

}  // namespace surfora::phantom
