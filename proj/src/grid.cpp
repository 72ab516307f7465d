#include "surfora/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace surfora {

Vec3i GridGeometry::nearest_voxel(const Vec3& p) const {
  const Vec3 c = continuous_index(p);
  return {int(std::floor(c.x() + 0.5)), int(std::floor(c.y() + 0.5)), int(std::floor(c.z() + 0.5))};
}

bool GridGeometry::same_frame(const GridGeometry& other, double tol) const {
  return dims == other.dims && (spacing - other.spacing).cwiseAbs().maxCoeff() <= tol &&
         (origin - other.origin).cwiseAbs().maxCoeff() <= tol;
}

void GridGeometry::validate() const {
  if (dims.minCoeff() < 1) throw std::invalid_argument("grid dims must be >= 1");
  if (!(spacing.minCoeff() > 0.0) || !spacing.allFinite())
    throw std::invalid_argument("non-positive voxel size");
  if (!origin.allFinite()) throw std::invalid_argument("non-finite grid origin");
}

std::uint32_t VoxelGrid::label_at(const Vec3& p) const {
  const Vec3i v = grid.nearest_voxel(p);
  return grid.contains(v) ? (*this)(v.x(), v.y(), v.z()) : 0u;
}

Index VoxelGrid::count_foreground() const {
  return Index(std::count_if(labels.begin(), labels.end(), [](std::uint32_t l) { return l != 0; }));
}

std::uint32_t VoxelGrid::max_label() const {
  return labels.empty() ? 0u : *std::max_element(labels.begin(), labels.end());
}

bool VoxelGrid::is_binary() const {
  return std::all_of(labels.begin(), labels.end(), [](std::uint32_t l) { return l <= 1; });
}

void VoxelGrid::validate() const {
  grid.validate();
  if (Index(labels.size()) != grid.size())
    throw std::invalid_argument("voxel data length does not match dims");
}

VoxelGrid binarize(const VoxelGrid& in) {
  VoxelGrid out(in.grid);
  std::transform(in.labels.begin(), in.labels.end(), out.labels.begin(),
                 [](std::uint32_t l) { return l != 0 ? 1u : 0u; });
  return out;
}

}  // namespace surfora
