#include "surfora/meshing.hpp"

#include "surfora/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace surfora {

void MeshParams::validate() const {
  for (double r : radii_nm)
    if (!(r > 0.0)) throw std::invalid_argument("radii_nm must be positive");
  for (std::size_t i = 1; i < radii_nm.size(); ++i)
    if (!(radii_nm[i] > radii_nm[i - 1])) throw std::invalid_argument("radii_nm must be strictly ascending");
  if (radii_nm.empty() && radius_multipliers.empty()) throw std::invalid_argument("radius_multipliers is empty");
  for (double m : radius_multipliers)
    if (!(m > 0.0)) throw std::invalid_argument("radius_multipliers must be positive");
  if (!(gap_dist_nm > 0.0)) throw std::invalid_argument("gap_dist_nm must be > 0");
  if (!(sat_tolerance_nm >= 0.0)) throw std::invalid_argument("sat_tolerance_nm must be >= 0");
  if (poisson_depth < 2 || poisson_depth > 10) throw std::invalid_argument("poisson_depth must be in [2, 10]");
  if (!(density_trim_quantile >= 0.0 && density_trim_quantile < 1.0))
    throw std::invalid_argument("density_trim_quantile must be in [0, 1)");
  if (!(smooth_lambda > 0.0 && smooth_lambda < 1.0)) throw std::invalid_argument("smooth_lambda must be in (0, 1)");
  if (smooth_iterations < 0) throw std::invalid_argument("smooth_iterations must be >= 0");
}

std::vector<double> resolve_radii(const PointCloud& cloud, const MeshParams& params) {
  if (!params.radii_nm.empty()) return params.radii_nm;
  if (cloud.size() < 2) throw std::invalid_argument("radius scan needs at least 2 points");
  const KdTree tree(cloud.points);
  const double s = median(nearest_neighbor_distances(tree));
  if (!(s > 0.0)) throw std::invalid_argument("radius scan: median spacing is zero");
  std::vector<double> r;
  for (double m : params.radius_multipliers) r.push_back(m * s);
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

namespace {

// Center of the radius-rho ball through p0, p1, p2 on the side of (p1-p0)x(p2-p0).
bool ball_center(const Vec3& p0, const Vec3& p1, const Vec3& p2, double rho, Vec3& center) {
  const Vec3 a = p1 - p0, b = p2 - p0;
  const Vec3 n = a.cross(b);
  const double n2 = n.squaredNorm();
  if (!(n2 > 1e-18 * a.squaredNorm() * b.squaredNorm()) || n2 == 0.0) return false;
  const Vec3 cc = p0 + (a.squaredNorm() * b.cross(n) + b.squaredNorm() * n.cross(a)) / (2.0 * n2);
  const double r2 = (cc - p0).squaredNorm();
  const double h2 = rho * rho - r2;
  if (h2 < 0.0) return false;
  center = cc + std::sqrt(h2) * n / std::sqrt(n2);
  return true;
}

struct FrontEdge {
  int a, b, opposite;
  Vec3 center;
};

class Pivoter {
 public:
  Pivoter(const PointCloud& cloud) : P(cloud.points), N(cloud.normals), tree(cloud.points) {
    used.assign(P.size(), 0);
    open_edges.assign(P.size(), 0);
  }

  std::vector<Face> faces;

  void run(double rho) {
    rho_ = rho;
    if (!faces.empty()) reactivate();
    seed_cursor_ = 0;
    for (;;) {
      advance();
      if (!seed()) break;
      ++seeds;
    }
  }

  int seeds = 0;

 private:
  static std::uint64_t key(int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); }
  bool has(int a, int b) const { return half_edges_.count(key(a, b)) != 0; }

  bool empty_ball(const Vec3& c, int i, int j, int k) const {
    const double r = rho_ * (1.0 - 1e-9);
    for (const Neighbor& q : tree.radius(c, r))
      if (q.index != i && q.index != j && q.index != k && q.dist2 < r * r) return false;
    return true;
  }

  bool inner(int v) const { return used[std::size_t(v)] && open_edges[std::size_t(v)] == 0; }

  void add_face(int x, int y, int z, const Vec3& center) {
    faces.push_back({x, y, z});
    const int f[3] = {x, y, z};
    for (int e = 0; e < 3; ++e) {
      const int u = f[e], v = f[(e + 1) % 3];
      half_edges_.insert(key(u, v));
      const int d = has(v, u) ? -1 : 1;
      open_edges[std::size_t(u)] += d;
      open_edges[std::size_t(v)] += d;
      used[std::size_t(u)] = 1;
    }
    for (int e = 0; e < 3; ++e) {
      const int u = f[e], v = f[(e + 1) % 3];
      if (!has(v, u)) front_.push_back({u, v, f[(e + 2) % 3], center});
    }
  }

  // Smallest rotation about a->b that brings the ball onto another point.
  bool pivot(const FrontEdge& e, int& k_out, Vec3& c_out) const {
    const Vec3 &pa = P[std::size_t(e.a)], &pb = P[std::size_t(e.b)];
    const Vec3 m = 0.5 * (pa + pb);
    const Vec3 u = (pb - pa).normalized();
    Vec3 v0 = e.center - m;
    v0 -= v0.dot(u) * u;
    struct Cand {
      double theta;
      int k;
      Vec3 c;
    };
    std::vector<Cand> cands;
    for (const Neighbor& q : tree.radius(m, 2.0 * rho_)) {
      const int k = q.index;
      if (k == e.a || k == e.b || k == e.opposite) continue;
      const Vec3& pk = P[std::size_t(k)];
      Vec3 c;
      if (!ball_center(pb, pa, pk, rho_, c)) continue;
      const Vec3 nt = (pa - pb).cross(pk - pb);
      if (nt.dot(N[std::size_t(e.a)] + N[std::size_t(e.b)] + N[std::size_t(k)]) <= 0.0) continue;
      Vec3 vk = c - m;
      vk -= vk.dot(u) * u;
      double theta = std::atan2(u.dot(v0.cross(vk)), v0.dot(vk));
      if (theta < 0.0) theta += 2.0 * std::numbers::pi;
      cands.push_back({theta, k, c});
    }
    std::sort(cands.begin(), cands.end(),
              [](const Cand& x, const Cand& y) { return x.theta != y.theta ? x.theta < y.theta : x.k < y.k; });
    for (const Cand& c : cands)
      if (empty_ball(c.c, e.a, e.b, c.k)) {
        k_out = c.k;
        c_out = c.c;
        return true;
      }
    return false;
  }

  void advance() {
    while (!front_.empty()) {
      const FrontEdge e = front_.front();
      front_.pop_front();
      if (has(e.b, e.a)) continue;
      int k;
      Vec3 c;
      if (!pivot(e, k, c)) continue;
      if (inner(k) || has(e.b, e.a) || has(e.a, k) || has(k, e.b)) continue;
      add_face(e.b, e.a, k, c);
    }
  }

  bool seed() {
    const int n = int(P.size());
    for (; seed_cursor_ < n; ++seed_cursor_) {
      const int i = seed_cursor_;
      if (used[std::size_t(i)]) continue;
      std::vector<int> nb;
      for (const Neighbor& q : tree.radius(P[std::size_t(i)], 2.0 * rho_))
        if (q.index != i && !used[std::size_t(q.index)]) nb.push_back(q.index);
      std::sort(nb.begin(), nb.end());
      for (std::size_t x = 0; x < nb.size(); ++x)
        for (std::size_t y = x + 1; y < nb.size(); ++y) {
          int j = nb[x], k = nb[y];
          const Vec3 &pi = P[std::size_t(i)], &pj = P[std::size_t(j)], &pk = P[std::size_t(k)];
          if ((pj - pk).norm() > 2.0 * rho_) continue;
          Vec3 nt = (pj - pi).cross(pk - pi);
          if (nt.dot(N[std::size_t(i)] + N[std::size_t(j)] + N[std::size_t(k)]) < 0.0) {
            std::swap(j, k);
            nt = -nt;
          }
          if (nt.dot(N[std::size_t(i)]) <= 0.0 || nt.dot(N[std::size_t(j)]) <= 0.0 ||
              nt.dot(N[std::size_t(k)]) <= 0.0)
            continue;
          Vec3 c;
          if (!ball_center(pi, P[std::size_t(j)], P[std::size_t(k)], rho_, c)) continue;
          if (!empty_ball(c, i, j, k)) continue;
          add_face(i, j, k, c);
          return true;
        }
    }
    return false;
  }

  // Boundary edges left by the previous radius become front edges again.
  void reactivate() {
    for (const Face& f : faces)
      for (int e = 0; e < 3; ++e) {
        const int u = f[std::size_t(e)], v = f[std::size_t((e + 1) % 3)], w = f[std::size_t((e + 2) % 3)];
        if (has(v, u)) continue;
        Vec3 c;
        if (ball_center(P[std::size_t(f[0])], P[std::size_t(f[1])], P[std::size_t(f[2])], rho_, c))
          front_.push_back({u, v, w, c});
      }
  }

  const std::vector<Vec3>& P;
  const std::vector<Vec3>& N;
  KdTree tree;
  std::vector<char> used;
  std::vector<int> open_edges;  // boundary edges touching each vertex
  std::unordered_set<std::uint64_t> half_edges_;
  std::deque<FrontEdge> front_;
  double rho_ = 0.0;
  int seed_cursor_ = 0;
};

}  // namespace

TriangleMesh ball_pivot(const PointCloud& cloud, const MeshParams& params, BallPivotStats* stats) {
  params.validate();
  cloud.validate();
  if (cloud.size() < 3) throw std::invalid_argument("ball_pivot requires at least 3 points");
  if (!cloud.has_normals()) throw std::invalid_argument("ball_pivot requires oriented normals");
  const std::vector<double> radii = resolve_radii(cloud, params);

  BallPivotStats st;
  st.radii = radii;
  Pivoter piv(cloud);
  for (double r : radii) {
    const std::size_t before = piv.faces.size();
    piv.run(r);
    st.faces_per_radius.push_back(int(piv.faces.size() - before));
  }
  st.seeds = piv.seeds;
  if (piv.faces.empty()) {
    std::ostringstream msg;
    msg << "radius scan failed: no seed triangle for radii [";
    for (std::size_t i = 0; i < radii.size(); ++i) msg << (i ? ", " : "") << radii[i];
    msg << "] nm";
    throw std::runtime_error(msg.str());
  }
  if (stats) *stats = st;

  TriangleMesh mesh;
  mesh.vertices = cloud.points;
  mesh.normals = cloud.normals;
  mesh.faces = std::move(piv.faces);
  if (cloud.has_labels()) mesh.channels["label"].assign(cloud.labels.begin(), cloud.labels.end());
  return mesh_cleanup(mesh);
}

TriangleMesh damped_laplacian_smooth(const TriangleMesh& mesh, const MeshParams& params) {
  params.validate();
  TriangleMesh out = mesh;
  if (params.smooth_iterations == 0 || mesh.faces.empty()) return out;
  const auto adj = vertex_adjacency(mesh);
  const auto boundary = boundary_vertices(mesh);
  const double lambda = params.smooth_lambda;
  const int n = int(mesh.num_vertices());
  for (int it = 0; it < params.smooth_iterations; ++it) {
    std::vector<Vec3> next = out.vertices;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < n; ++v) {
      const auto& nb = adj[std::size_t(v)];
      if (boundary[std::size_t(v)] || nb.empty()) continue;
      Vec3 c = Vec3::Zero();
      for (int u : nb) c += out.vertices[std::size_t(u)];
      c /= double(nb.size());
      next[std::size_t(v)] = out.vertices[std::size_t(v)] + lambda * (c - out.vertices[std::size_t(v)]);
    }
    out.vertices.swap(next);
  }
  if (out.has_normals()) {
    // keep each normal on the side it was on before smoothing
    const auto fresh = compute_vertex_normals(out);
    for (std::size_t v = 0; v < fresh.size(); ++v)
      if (fresh[v].squaredNorm() > 0.0) out.normals[v] = fresh[v].dot(mesh.normals[v]) < 0.0 ? -fresh[v] : fresh[v];
  }
  return out;
}

PointCloud mesh_to_cloud(const TriangleMesh& mesh) {
  PointCloud c;
  c.points = mesh.vertices;
  c.normals = mesh.has_normals() ? mesh.normals : compute_vertex_normals(mesh);
  for (auto& n : c.normals)
    if (!(n.squaredNorm() > 0.0)) n = Vec3::UnitZ();
  return c;
}

}  // namespace surfora
