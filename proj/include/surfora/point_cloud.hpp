#pragma once

#include "surfora/grid.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace surfora {

/// Points in nm with optional unit normals, labels and named real channels.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;                               // empty or one per point
  std::vector<std::uint32_t> labels;                       // empty or one per point
  std::map<std::string, std::vector<double>> attributes;  // each one value per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_labels() const { return !labels.empty(); }

  /// Throws on length mismatches or normals that are not unit within 1e-6.
  void validate() const;

  /// Copy restricted to the given indices, in the given order.
  PointCloud subset(const std::vector<int>& indices) const;

  /// Appends another cloud; channels must match.
  void append(const PointCloud& other);
};

}  // namespace surfora
