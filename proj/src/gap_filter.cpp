#include "surfora/meshing.hpp"

#include "surfora/kdtree.hpp"
#include "surfora/volume.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace surfora {

bool triangle_box_overlap(const Vec3& box_center, const Vec3& half_size, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v[3] = {a - box_center, b - box_center, c - box_center};
  const Vec3 e[3] = {v[1] - v[0], v[2] - v[1], v[0] - v[2]};
  const Vec3& h = half_size;

  auto separated = [&](const Vec3& axis) {
    const double p0 = axis.dot(v[0]), p1 = axis.dot(v[1]), p2 = axis.dot(v[2]);
    const double r = h.x() * std::abs(axis.x()) + h.y() * std::abs(axis.y()) + h.z() * std::abs(axis.z());
    return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
  };

  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (separated(Vec3::Unit(j).cross(e[i]))) return false;
  for (int j = 0; j < 3; ++j) {
    const double lo = std::min({v[0][j], v[1][j], v[2][j]});
    const double hi = std::max({v[0][j], v[1][j], v[2][j]});
    if (lo > h[j] || hi < -h[j]) return false;
  }
  return !separated(e[0].cross(e[1]));
}

VoxelGrid gap_voxels(const VoxelGrid& occupancy, double gap_dist_nm) {
  if (!(gap_dist_nm > 0.0)) throw std::invalid_argument("gap_dist_nm must be > 0");
  const ScalarField d = distance_to_foreground(occupancy);
  VoxelGrid gaps(occupancy.grid);
  const double thr = gap_dist_nm * (1.0 - 1e-12);
  for (std::size_t i = 0; i < gaps.labels.size(); ++i)
    gaps.labels[i] = (occupancy.labels[i] == 0 && d.values[i] >= thr) ? 1u : 0u;
  return gaps;
}

VoxelGrid rasterize_cloud(const PointCloud& cloud, double voxel_nm, double pad_nm) {
  if (cloud.size() == 0) throw std::invalid_argument("rasterize_cloud: empty cloud");
  if (!(voxel_nm > 0.0)) {
    if (cloud.size() < 2) throw std::invalid_argument("rasterize_cloud: cannot infer voxel size");
    voxel_nm = median(nearest_neighbor_distances(KdTree(cloud.points)));
    if (!(voxel_nm > 0.0)) throw std::invalid_argument("rasterize_cloud: zero point spacing");
  }
  Vec3 lo = cloud.points[0], hi = cloud.points[0];
  for (const Vec3& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double pad = std::ceil(std::max(pad_nm, 0.0) / voxel_nm) * voxel_nm;
  GridGeometry g;
  g.spacing = Vec3::Constant(voxel_nm);
  g.origin = lo - Vec3::Constant(pad);
  for (int a = 0; a < 3; ++a) g.dims[a] = int(std::llround((hi[a] - lo[a] + 2.0 * pad) / voxel_nm)) + 1;
  if (double(g.size()) > 4e8) throw std::invalid_argument("rasterize_cloud: raster too large");
  VoxelGrid out(g);
  const bool labelled = cloud.has_labels();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3i v = g.nearest_voxel(cloud.points[i]);
    if (!g.contains(v)) continue;
    auto& l = out(v.x(), v.y(), v.z());
    l = std::max(l, labelled ? std::max<std::uint32_t>(cloud.labels[i], 1u) : 1u);
  }
  return out;
}

TriangleMesh gap_filter(const TriangleMesh& mesh, const VoxelGrid& support, const MeshParams& params,
                        GapFilterStats* stats) {
  params.validate();
  mesh.validate();
  support.validate();
  const GridGeometry& g = support.grid;
  const Vec3 lo = g.origin - 1.5 * g.spacing;
  const Vec3 hi = g.world(g.dims - Vec3i::Ones()) + 1.5 * g.spacing;
  for (const auto& f : mesh.faces)
    for (int v : f) {
      const Vec3& p = mesh.vertices[std::size_t(v)];
      if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any())
        throw std::invalid_argument("gap_filter: frame mismatch between mesh and support");
    }

  GapFilterStats st;
  const VoxelGrid gaps = gap_voxels(support, params.gap_dist_nm);
  st.gap_voxels = int(gaps.count_foreground());
  const Vec3 half = 0.5 * g.spacing - Vec3::Constant(params.sat_tolerance_nm);
  const bool can_hit = (half.array() >= 0.0).all();

  const int nf = int(mesh.num_faces());
  std::vector<char> removed(std::size_t(nf), 0);
#pragma omp parallel for schedule(dynamic, 64)
  for (int f = 0; f < nf; ++f) {
    if (!can_hit || st.gap_voxels == 0) continue;
    const Face& t = mesh.faces[std::size_t(f)];
    const Vec3 &a = mesh.vertices[std::size_t(t[0])], &b = mesh.vertices[std::size_t(t[1])],
               &c = mesh.vertices[std::size_t(t[2])];
    const Vec3 fmin = g.continuous_index(a.cwiseMin(b).cwiseMin(c));
    const Vec3 fmax = g.continuous_index(a.cwiseMax(b).cwiseMax(c));
    Vec3i i0, i1;
    for (int d = 0; d < 3; ++d) {
      i0[d] = std::max(0, int(std::ceil(fmin[d] - 0.5)));
      i1[d] = std::min(g.dims[d] - 1, int(std::floor(fmax[d] + 0.5)));
    }
    bool hit = false;
    for (int k = i0.z(); k <= i1.z() && !hit; ++k)
      for (int j = i0.y(); j <= i1.y() && !hit; ++j)
        for (int i = i0.x(); i <= i1.x() && !hit; ++i)
          if (gaps(i, j, k) && triangle_box_overlap(g.world(i, j, k), half, a, b, c)) hit = true;
    if (hit) removed[std::size_t(f)] = 1;
  }
  for (char r : removed) st.removed_sat += r;

  const auto label_it = mesh.channels.find("label");
  const bool vertex_labels = label_it != mesh.channels.end();
  const bool labelled_support = !support.is_binary();
  if (vertex_labels || labelled_support) {
    for (int f = 0; f < nf; ++f) {
      if (removed[std::size_t(f)]) continue;
      std::set<std::uint32_t> seen;
      for (int v : mesh.faces[std::size_t(f)]) {
        if (vertex_labels) {
          const double l = label_it->second[std::size_t(v)];
          if (std::isfinite(l) && l > 0.0) seen.insert(std::uint32_t(std::llround(l)));
        }
        if (labelled_support) {
          const std::uint32_t l = support.label_at(mesh.vertices[std::size_t(v)]);
          if (l) seen.insert(l);
        }
      }
      if (seen.size() > 1) {
        removed[std::size_t(f)] = 2;
        ++st.removed_label;
      }
    }
  }

  std::vector<int> keep;
  for (int f = 0; f < nf; ++f)
    if (!removed[std::size_t(f)]) keep.push_back(f);
  TriangleMesh kept = extract_faces(mesh, keep);

  // isolated faces: no edge shared with another face
  std::vector<char> shared(kept.num_faces(), 0);
  for (const auto& e : edge_faces(kept))
    if (e.faces.size() > 1)
      for (int f : e.faces) shared[std::size_t(f)] = 1;
  std::vector<int> keep2;
  for (std::size_t f = 0; f < kept.num_faces(); ++f) {
    if (shared[f]) keep2.push_back(int(f));
    else ++st.removed_isolated;
  }
  if (stats) *stats = st;
  return extract_faces(kept, keep2);
}

TriangleMesh gap_filter(const TriangleMesh& mesh, const PointCloud& support, const MeshParams& params,
                        GapFilterStats* stats) {
  params.validate();
  const VoxelGrid occ = rasterize_cloud(support, -1.0, params.gap_dist_nm + 2.0 * params.gap_dist_nm);
  return gap_filter(mesh, occ, params, stats);
}

}  // namespace surfora
