#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace surfora::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("surfora_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline VoxelGrid random_mask(std::mt19937_64& rng, const Vec3i& dims, double density, const Vec3& spacing = Vec3::Ones()) {
  GridGeometry g;
  g.dims = dims;
  g.spacing = spacing;
  VoxelGrid m(g);
  std::bernoulli_distribution on(density);
  for (auto& l : m.labels) l = on(rng) ? 1u : 0u;
  return m;
}

// Distance from each voxel centre to the nearest voxel with the requested
// occupancy, by exhaustive scan.
inline std::vector<double> brute_force_distance_to(const VoxelGrid& m, bool to_foreground) {
  const GridGeometry& g = m.grid;
  std::vector<Vec3> sites;
  for (Index i = 0; i < g.size(); ++i)
    if ((m.labels[std::size_t(i)] != 0) == to_foreground) sites.push_back(g.world(g.unravel(i)));
  std::vector<double> out(std::size_t(g.size()), std::numeric_limits<double>::infinity());
  for (Index i = 0; i < g.size(); ++i) {
    const Vec3 p = g.world(g.unravel(i));
    for (const Vec3& s : sites) out[std::size_t(i)] = std::min(out[std::size_t(i)], (p - s).norm());
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

// Random triangle soup inside [lo, hi].
inline TriangleMesh random_soup(std::mt19937_64& rng, int faces, const Vec3& lo, const Vec3& hi, double size) {
  std::uniform_real_distribution<double> u(0.0, 1.0), d(-size, size);
  TriangleMesh m;
  for (int f = 0; f < faces; ++f) {
    const Vec3 c = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(hi - lo);
    for (int k = 0; k < 3; ++k) m.vertices.push_back(c + Vec3(d(rng), d(rng), d(rng)));
    m.faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
  }
  return m;
}

// Closest point by cases: interior projection, else the best clamped edge projection.
inline Vec3 reference_closest(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  if (n.squaredNorm() > 1e-300) {
    const Vec3 q = p - (p - a).dot(n) / n.squaredNorm() * n;
    const double wa = (b - q).cross(c - q).dot(n), wb = (c - q).cross(a - q).dot(n), wc = (a - q).cross(b - q).dot(n);
    if (wa >= 0 && wb >= 0 && wc >= 0) return q;
  }
  Vec3 best = a;
  for (const auto& [u, v] : {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}}) {
    const Vec3 d = v - u;
    const double t = d.squaredNorm() > 0 ? std::clamp((p - u).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
    const Vec3 x = u + t * d;
    if ((x - p).squaredNorm() < (best - p).squaredNorm()) best = x;
  }
  return best;
}

// Clips the triangle against the six slabs of the box; overlap iff anything
// survives.
inline bool clip_overlap(const Vec3& c, const Vec3& h, const Vec3& a, const Vec3& b, const Vec3& d) {
  std::vector<Vec3> poly{a, b, d};
  for (int axis = 0; axis < 3; ++axis)
    for (int side : {-1, 1}) {
      const double bound = c[axis] + side * h[axis];
      auto inside = [&](const Vec3& p) { return side * (p[axis] - bound) <= 0.0; };
      std::vector<Vec3> out;
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec3 &p = poly[i], &q = poly[(i + 1) % poly.size()];
        const bool ip = inside(p), iq = inside(q);
        if (ip) out.push_back(p);
        if (ip != iq) {
          const double t = (bound - p[axis]) / (q[axis] - p[axis]);
          Vec3 x = p + t * (q - p);
          x[axis] = bound;
          out.push_back(x);
        }
      }
      poly.swap(out);
      if (poly.empty()) return false;
    }
  return true;
}

using FaceKey = std::array<std::array<double, 3>, 3>;

inline FaceKey face_key(const TriangleMesh& m, const Face& f) {
  FaceKey k;
  for (int i = 0; i < 3; ++i) {
    const Vec3& v = m.vertices[std::size_t(f[std::size_t(i)])];
    k[std::size_t(i)] = {v.x(), v.y(), v.z()};
  }
  std::sort(k.begin(), k.end());
  return k;
}

// Faces surviving the gap filter: no SAT contact with a gap voxel, and at
// least one edge shared with another surviving face.
inline std::multiset<FaceKey> reference_gap_filter(const TriangleMesh& mesh, const VoxelGrid& support, double gap,
                                                   std::vector<int>* sat_kept_faces = nullptr) {
  const GridGeometry& g = support.grid;
  const auto dist = brute_force_distance_to(support, true);
  std::vector<int> kept;
  for (int f = 0; f < int(mesh.num_faces()); ++f) {
    const Face& t = mesh.faces[std::size_t(f)];
    bool hit = false;
    for (Index i = 0; i < g.size() && !hit; ++i) {
      if (support.labels[std::size_t(i)] || dist[std::size_t(i)] < gap) continue;
      hit = clip_overlap(g.world(g.unravel(i)), 0.5 * g.spacing, mesh.vertices[std::size_t(t[0])],
                         mesh.vertices[std::size_t(t[1])], mesh.vertices[std::size_t(t[2])]);
    }
    if (!hit) kept.push_back(f);
  }
  const TriangleMesh sat_kept = extract_faces(mesh, kept);
  std::vector<int> edge_count(sat_kept.num_faces(), 0);
  for (const auto& e : edge_faces(sat_kept))
    if (e.faces.size() > 1)
      for (int f : e.faces) ++edge_count[std::size_t(f)];
  std::multiset<FaceKey> expected;
  for (std::size_t f = 0; f < sat_kept.num_faces(); ++f)
    if (edge_count[f]) expected.insert(face_key(sat_kept, sat_kept.faces[f]));
  if (sat_kept_faces) *sat_kept_faces = kept;
  return expected;
}

}  // namespace surfora::testing
