#include "surfora/metrics.hpp"

#include "surfora/bvh.hpp"
#include "surfora/heat.hpp"
#include "surfora/kdtree.hpp"
#include "surfora/monge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace surfora {

DistanceReport point_to_mesh_distance(const std::vector<Vec3>& queries, const TriangleMesh& target) {
  if (queries.empty()) throw std::invalid_argument("point_to_mesh_distance: empty query set");
  if (target.faces.empty()) throw std::invalid_argument("point_to_mesh_distance: empty target mesh");
  const TriangleBvh bvh(target);
  DistanceReport rep;
  rep.queries = queries;
  const int n = int(queries.size());
  rep.distance.resize(std::size_t(n));
#pragma omp parallel for schedule(dynamic, 256)
  for (int i = 0; i < n; ++i) rep.distance[std::size_t(i)] = std::sqrt(bvh.closest(queries[std::size_t(i)]).dist2);

  double s = 0.0;
  rep.min = std::numeric_limits<double>::infinity();
  rep.max = -rep.min;
  for (double d : rep.distance) {
    s += d;
    rep.min = std::min(rep.min, d);
    rep.max = std::max(rep.max, d);
  }
  rep.mean = s / n;
  double v = 0.0;
  for (double d : rep.distance) v += (d - rep.mean) * (d - rep.mean);
  rep.stddev = std::sqrt(v / n);
  // guard the documented ordering against rounding in the mean
  rep.mean = std::clamp(rep.mean, rep.min, rep.max);
  return rep;
}

double brute_force_distance(const Vec3& q, const TriangleMesh& target) {
  double best = std::numeric_limits<double>::infinity();
  for (const Face& f : target.faces) {
    const Vec3 c = closest_point_on_triangle(q, target.vertices[std::size_t(f[0])], target.vertices[std::size_t(f[1])],
                                             target.vertices[std::size_t(f[2])]);
    best = std::min(best, (c - q).squaredNorm());
  }
  return std::sqrt(best);
}

CurvatureParams CurvatureParams::for_voxel(double voxel_nm) {
  CurvatureParams p;
  for (double& r : p.radii_nm) r *= voxel_nm;
  return p;
}

void CurvatureParams::validate() const {
  if (radii_nm.empty()) throw std::invalid_argument("curvature radii_nm is empty");
  for (std::size_t i = 0; i < radii_nm.size(); ++i) {
    if (!(radii_nm[i] > 0.0)) throw std::invalid_argument("curvature radii must be positive");
    if (i && !(radii_nm[i] > radii_nm[i - 1])) throw std::invalid_argument("curvature radii must be strictly ascending");
  }
  if (!(delta_rel > 0.0)) throw std::invalid_argument("delta_rel must be > 0");
  if (!(delta_abs > 0.0)) throw std::invalid_argument("delta_abs must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (min_neighbors < 1) throw std::invalid_argument("min_neighbors must be >= 1");
  if (!(heat_time_factor > 0.0)) throw std::invalid_argument("heat_time_factor must be > 0");
}

std::pair<double, int> select_stable_radius(const std::vector<double>& H, const CurvatureParams& params) {
  if (H.size() != params.radii_nm.size()) throw std::invalid_argument("select_stable_radius: size mismatch");
  for (std::size_t s = 1; s < H.size(); ++s) {
    const double h1 = H[s], h0 = H[s - 1];
    if (!std::isfinite(h1) || !std::isfinite(h0)) continue;
    const double tol = std::max(params.delta_rel * std::max({std::abs(h1), std::abs(h0), params.epsilon}), params.delta_abs);
    if (std::abs(h1 - h0) <= tol) return {params.radii_nm[s], int(s)};
  }
  for (std::size_t s = H.size(); s-- > 0;)
    if (std::isfinite(H[s])) return {params.radii_nm[s], int(s)};
  return {std::numeric_limits<double>::quiet_NaN(), -1};
}

double curvature_confidence(double residual_rms, double H, double r_used, int neighbors, const CurvatureParams& params) {
  const double fit = std::clamp(1.0 - residual_rms / (params.delta_abs + std::abs(H) * r_used), 0.0, 1.0);
  return fit * std::min(1.0, neighbors / (3.0 * params.min_neighbors));
}

namespace {

// Vertices mesh-connected to v inside the Euclidean ball of radius r, as a local
// mesh with v at index 0.
struct Patch {
  TriangleMesh mesh;
  std::vector<int> global;
};

Patch local_patch(const TriangleMesh& mesh, const std::vector<std::vector<int>>& vertex_faces,
                  const std::vector<std::vector<int>>& adj, int v, double r) {
  Patch p;
  const Vec3& c = mesh.vertices[std::size_t(v)];
  const double r2 = r * r;
  std::unordered_map<int, int> local;
  local[v] = 0;
  p.global.push_back(v);
  for (std::size_t head = 0; head < p.global.size(); ++head)
    for (int u : adj[std::size_t(p.global[head])])
      if (!local.count(u) && (mesh.vertices[std::size_t(u)] - c).squaredNorm() <= r2) {
        local[u] = int(p.global.size());
        p.global.push_back(u);
      }
  p.mesh.vertices.reserve(p.global.size());
  for (int g : p.global) p.mesh.vertices.push_back(mesh.vertices[std::size_t(g)]);
  std::vector<int> faces;
  for (int g : p.global)
    for (int f : vertex_faces[std::size_t(g)]) faces.push_back(f);
  std::sort(faces.begin(), faces.end());
  faces.erase(std::unique(faces.begin(), faces.end()), faces.end());
  for (int f : faces) {
    const Face& t = mesh.faces[std::size_t(f)];
    const auto a = local.find(t[0]), b = local.find(t[1]), cc = local.find(t[2]);
    if (a != local.end() && b != local.end() && cc != local.end())
      p.mesh.faces.push_back({a->second, b->second, cc->second});
  }
  return p;
}

}  // namespace

CurvatureReport curvature_monge(const TriangleMesh& mesh, const CurvatureParams& params) {
  params.validate();
  mesh.validate();
  const int n = int(mesh.num_vertices());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CurvatureReport rep;
  rep.H.assign(std::size_t(n), nan);
  rep.K.assign(std::size_t(n), nan);
  rep.r_used.assign(std::size_t(n), nan);
  rep.confidence.assign(std::size_t(n), nan);
  rep.low_confidence.assign(std::size_t(n), false);
  rep.excluded.assign(std::size_t(n), false);
  rep.neighbors.assign(std::size_t(n), 0);
  rep.boundary_excluded = boundary_vertices(mesh);
  if (n == 0) return rep;

  const std::vector<Vec3> normals = mesh.has_normals() ? mesh.normals : compute_vertex_normals(mesh);
  const auto adj = vertex_adjacency(mesh);
  std::vector<std::vector<int>> vertex_faces(static_cast<std::size_t>(n));
  for (std::size_t f = 0; f < mesh.num_faces(); ++f)
    for (int v : mesh.faces[f]) vertex_faces[std::size_t(v)].push_back(int(f));
  const double rmax = params.radii_nm.back();
  const std::size_t S = params.radii_nm.size();

  std::vector<char> low(std::size_t(n), 0), excl(std::size_t(n), 0);
#pragma omp parallel for schedule(dynamic, 16)
  for (int v = 0; v < n; ++v) {
    if (rep.boundary_excluded[std::size_t(v)] || adj[std::size_t(v)].empty()) continue;
    const Vec3 nv = normals[std::size_t(v)];
    if (!(nv.squaredNorm() > 0.0)) {
      excl[std::size_t(v)] = 1;
      continue;
    }
    const Patch patch = local_patch(mesh, vertex_faces, adj, v, rmax);
    std::vector<double> geo;
    if (patch.mesh.faces.empty()) {
      geo.assign(patch.global.size(), std::numeric_limits<double>::infinity());
      geo[0] = 0.0;
    } else {
      geo = heat_geodesics(patch.mesh, {0}, params.heat_time_factor).distance;
    }
    const LocalFrame frame = frame_from_normal(mesh.vertices[std::size_t(v)], nv.normalized());

    std::vector<double> Hs(S, nan), Ks(S, nan), res(S, nan);
    std::vector<int> counts(S, 0);
    for (std::size_t s = 0; s < S; ++s) {
      const double r = params.radii_nm[s];
      const double bw = 0.5 * r;
      std::vector<Vec3> pts;
      std::vector<double> w;
      for (std::size_t i = 0; i < patch.global.size(); ++i)
        if (geo[i] <= r) {
          pts.push_back(patch.mesh.vertices[i]);
          w.push_back(std::exp(-(geo[i] * geo[i]) / (bw * bw)));
        }
      counts[s] = int(pts.size()) - 1;
      if (pts.size() < 6) continue;
      const MongeCoeffs m = fit_monge(pts, w, frame, MongeFitOptions{true, false});
      if (!m.ok) continue;
      Hs[s] = m.mean_curvature();
      Ks[s] = m.gaussian_curvature();
      res[s] = m.residual_rms;
    }
    const auto [r_used, idx] = select_stable_radius(Hs, params);
    rep.neighbors[std::size_t(v)] = counts[S - 1];
    if (idx < 0) {
      excl[std::size_t(v)] = 1;
      continue;
    }
    const std::size_t k = std::size_t(idx);
    rep.H[std::size_t(v)] = Hs[k];
    rep.K[std::size_t(v)] = Ks[k];
    rep.r_used[std::size_t(v)] = r_used;
    rep.confidence[std::size_t(v)] = curvature_confidence(res[k], Hs[k], r_used, counts[k], params);
    if (counts[S - 1] < params.min_neighbors) low[std::size_t(v)] = 1;
  }
  for (int v = 0; v < n; ++v) {
    rep.low_confidence[std::size_t(v)] = low[std::size_t(v)];
    rep.excluded[std::size_t(v)] = excl[std::size_t(v)];
  }
  return rep;
}

void attach_curvature(TriangleMesh& mesh, const CurvatureReport& report) {
  mesh.channels["H"] = report.H;
  mesh.channels["K"] = report.K;
  mesh.channels["r_used"] = report.r_used;
  mesh.channels["confidence"] = report.confidence;
}

}  // namespace surfora
