#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cstdint>
#include <vector>

namespace surfora {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Index = std::int64_t;

/// Regular grid geometry shared by label volumes and scalar fields.
/// Sample (i,j,k) sits at origin + (i,j,k) * spacing (nm), x fastest in memory.
struct GridGeometry {
  Vec3i dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  Index size() const { return Index(dims.x()) * dims.y() * dims.z(); }

  Index linear(int i, int j, int k) const {
    return i + Index(dims.x()) * (j + Index(dims.y()) * k);
  }
  Index linear(const Vec3i& ijk) const { return linear(ijk.x(), ijk.y(), ijk.z()); }

  Vec3i unravel(Index idx) const {
    const Index nx = dims.x(), ny = dims.y();
    return {int(idx % nx), int((idx / nx) % ny), int(idx / (nx * ny))};
  }

  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims.x() && j < dims.y() && k < dims.z();
  }
  bool contains(const Vec3i& ijk) const { return contains(ijk.x(), ijk.y(), ijk.z()); }

  Vec3 world(int i, int j, int k) const {
    return origin + Vec3(i, j, k).cwiseProduct(spacing);
  }
  Vec3 world(const Vec3i& ijk) const { return world(ijk.x(), ijk.y(), ijk.z()); }

  /// Continuous (fractional) index of a world point.
  Vec3 continuous_index(const Vec3& p) const { return (p - origin).cwiseQuotient(spacing); }

  /// Index of the voxel whose center is nearest to p (may be out of bounds).
  Vec3i nearest_voxel(const Vec3& p) const;

  double min_spacing() const { return spacing.minCoeff(); }

  bool same_frame(const GridGeometry& other, double tol = 1e-9) const;

  /// Throws std::invalid_argument on non-positive dims or spacing.
  void validate() const;
};

/// Real-valued field on a regular grid. φ < 0 inside foreground for SDFs.
template <typename Scalar>
struct Field {
  GridGeometry grid;
  std::vector<Scalar> values;

  Field() = default;
  explicit Field(const GridGeometry& g, Scalar fill = Scalar(0))
      : grid(g), values(std::size_t(g.size()), fill) {}

  Scalar& operator()(int i, int j, int k) { return values[std::size_t(grid.linear(i, j, k))]; }
  Scalar operator()(int i, int j, int k) const {
    return values[std::size_t(grid.linear(i, j, k))];
  }

  /// Value with indices clamped into the grid (replicate boundary).
  Scalar clamped(int i, int j, int k) const {
    i = std::clamp(i, 0, grid.dims.x() - 1);
    j = std::clamp(j, 0, grid.dims.y() - 1);
    k = std::clamp(k, 0, grid.dims.z() - 1);
    return (*this)(i, j, k);
  }
};

using ScalarField = Field<double>;

/// Labelled occupancy grid; 0 is background.
struct VoxelGrid {
  GridGeometry grid;
  std::vector<std::uint32_t> labels;

  VoxelGrid() = default;
  explicit VoxelGrid(const GridGeometry& g, std::uint32_t fill = 0)
      : grid(g), labels(std::size_t(g.size()), fill) {}

  std::uint32_t& operator()(int i, int j, int k) { return labels[std::size_t(grid.linear(i, j, k))]; }
  std::uint32_t operator()(int i, int j, int k) const {
    return labels[std::size_t(grid.linear(i, j, k))];
  }
  bool foreground(int i, int j, int k) const { return (*this)(i, j, k) != 0; }

  /// Label of the voxel containing p, 0 when p is outside the grid.
  std::uint32_t label_at(const Vec3& p) const;

  Index count_foreground() const;
  std::uint32_t max_label() const;
  bool is_binary() const;

  /// Throws on inconsistent dims/data or bad spacing.
  void validate() const;
};

/// Instance labelling; labels are contiguous 1..L.
using LabelMask = VoxelGrid;

/// Binary copy (every non-zero label becomes 1).
VoxelGrid binarize(const VoxelGrid& grid);

}  // namespace surfora
