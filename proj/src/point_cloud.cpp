#include "surfora/point_cloud.hpp"

#include <cmath>
#include <stdexcept>

namespace surfora {

void PointCloud::validate() const {
  if (!normals.empty()) {
    if (normals.size() != points.size()) throw std::invalid_argument("normal count does not match point count");
    for (const Vec3& n : normals)
      if (!(std::abs(n.norm() - 1.0) <= 1e-6)) throw std::invalid_argument("normals must have unit length");
  }
  if (!labels.empty() && labels.size() != points.size())
    throw std::invalid_argument("label count does not match point count");
  for (const auto& [name, v] : attributes)
    if (v.size() != points.size())
      throw std::invalid_argument("attribute '" + name + "' length does not match point count");
}

PointCloud PointCloud::subset(const std::vector<int>& indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (int i : indices) out.points.push_back(points[std::size_t(i)]);
  if (has_normals())
    for (int i : indices) out.normals.push_back(normals[std::size_t(i)]);
  if (has_labels())
    for (int i : indices) out.labels.push_back(labels[std::size_t(i)]);
  for (const auto& [name, v] : attributes) {
    auto& dst = out.attributes[name];
    dst.reserve(indices.size());
    for (int i : indices) dst.push_back(v[std::size_t(i)]);
  }
  return out;
}

void PointCloud::append(const PointCloud& other) {
  if (other.empty()) return;
  if (empty()) {
    *this = other;
    return;
  }
  if (has_normals() != other.has_normals() || has_labels() != other.has_labels())
    throw std::invalid_argument("cannot append clouds with different channels");
  points.insert(points.end(), other.points.begin(), other.points.end());
  normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  for (auto& [name, v] : attributes) {
    auto it = other.attributes.find(name);
    if (it == other.attributes.end()) throw std::invalid_argument("cannot append clouds with different attributes");
    v.insert(v.end(), it->second.begin(), it->second.end());
  }
}

}  // namespace surfora
