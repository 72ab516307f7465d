#include "surfora/medial.hpp"

#include "surfora/kdtree.hpp"
#include "surfora/monge.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace surfora {

MedialParams MedialParams::resolved(double voxel_nm) const {
  MedialParams p = *this;
  if (!(p.spacing_min_nm > 0.0)) p.spacing_min_nm = 0.5 * voxel_nm;
  if (!(p.spacing_max_nm > 0.0)) p.spacing_max_nm = 2.0 * voxel_nm;
  return p;
}

void MedialParams::validate() const {
  if (k_neighbors < 3) throw std::invalid_argument("k_neighbors must be >= 3");
  if (mls_iterations < 0) throw std::invalid_argument("mls_iterations must be >= 0");
  if (spacing_min_nm > 0.0 && spacing_max_nm > 0.0 && spacing_min_nm > spacing_max_nm)
    throw std::invalid_argument("spacing_min_nm must not exceed spacing_max_nm");
  if (!(thickness_factor > 0.0)) throw std::invalid_argument("thickness_factor must be > 0");
  if (min_component_size < 0) throw std::invalid_argument("min_component_size must be >= 0");
  if (!(curvature_spacing_factor > 0.0)) throw std::invalid_argument("curvature_spacing_factor must be > 0");
  if (!(mls_radius_factor > 0.0)) throw std::invalid_argument("mls_radius_factor must be > 0");
}

PointCloud voxels_to_points(const VoxelGrid& mask) {
  mask.validate();
  PointCloud out;
  const GridGeometry& g = mask.grid;
  for (Index idx = 0; idx < g.size(); ++idx)
    if (mask.labels[std::size_t(idx)] != 0) out.points.push_back(g.world(g.unravel(idx)));
  if (out.empty()) throw std::invalid_argument("voxels_to_points: empty mask");
  return out;
}

namespace {

struct Neighbourhood {
  std::vector<Vec3> pts;
  std::vector<double> w;
};

void gather(const KdTree& tree, const Vec3& q, double radius, int k_min, double bandwidth, Neighbourhood& nb) {
  auto found = tree.radius(q, radius);
  if (int(found.size()) < k_min) found = tree.knn(q, k_min);
  nb.pts.clear();
  nb.w.clear();
  const double inv = 1.0 / (bandwidth * bandwidth);
  for (const Neighbor& n : found) {
    nb.pts.push_back(tree.points()[std::size_t(n.index)]);
    nb.w.push_back(std::exp(-n.dist2 * inv));
  }
}

}  // namespace

PointCloud mls_project(const PointCloud& cloud, const MedialParams& params, const PointCloud* reference,
                       std::vector<bool>* flagged) {
  params.validate();
  const PointCloud& ref = reference ? *reference : cloud;
  if (int(ref.size()) < params.k_neighbors + 1) throw std::invalid_argument("mls_project: too few points");
  const KdTree tree(ref.points);
  const double sigma = mean_knn_distance(tree, params.k_neighbors);
  const double radius = params.mls_radius_factor * sigma;

  PointCloud out = cloud;
  std::vector<char> flag(cloud.size(), 0);
  const int n = int(cloud.size());
  for (int it = 0; it < params.mls_iterations; ++it) {
    std::vector<Vec3> next(out.points);
#pragma omp parallel
    {
      Neighbourhood nb;
#pragma omp for schedule(dynamic, 256)
      for (int i = 0; i < n; ++i) {
        const Vec3 x = out.points[std::size_t(i)];
        gather(tree, x, radius, params.k_neighbors, sigma, nb);
        const PcaResult pca = pca_frame(nb.pts, nb.w);
        if (pca.degenerate) {
          flag[std::size_t(i)] = 1;
          continue;
        }
        const MongeCoeffs m = fit_monge(nb.pts, nb.w, pca.frame);
        if (!m.ok) {
          flag[std::size_t(i)] = 1;
          continue;
        }
        const Vec3 l = pca.frame.to_local(x);
        next[std::size_t(i)] = pca.frame.to_world({l.x(), l.y(), m.height(l.x(), l.y())});
        flag[std::size_t(i)] = 0;
      }
    }
    out.points.swap(next);
  }
  if (flagged) flagged->assign(flag.begin(), flag.end());
  return out;
}

std::vector<int> poisson_disc_indices(const std::vector<Vec3>& points, const std::vector<double>& radii,
                                      std::uint64_t seed) {
  const std::size_t n = points.size();
  if (radii.size() != n) throw std::invalid_argument("poisson_disc: radius count mismatch");
  if (n == 0) return {};
  double rmax = 0.0;
  for (double r : radii) {
    if (!(r > 0.0)) throw std::invalid_argument("poisson_disc: radii must be > 0");
    rmax = std::max(rmax, r);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Vec3& pa = points[std::size_t(a)];
    const Vec3& pb = points[std::size_t(b)];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    if (pa.z() != pb.z()) return pa.z() < pb.z();
    if (radii[std::size_t(a)] != radii[std::size_t(b)]) return radii[std::size_t(a)] < radii[std::size_t(b)];
    return a < b;
  });
  // Fisher-Yates on the canonical order with an explicitly specified engine.
  std::mt19937_64 rng(seed);
  std::vector<int> visit = order;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(visit[i], visit[std::size_t(rng() % (i + 1))]);

  const double cell = rmax;
  auto key = [&](const Vec3i& c) {
    return (std::int64_t(c.x()) * 73856093) ^ (std::int64_t(c.y()) * 19349663) ^ (std::int64_t(c.z()) * 83492791);
  };
  auto cell_of = [&](const Vec3& p) {
    return Vec3i(int(std::floor(p.x() / cell)), int(std::floor(p.y() / cell)), int(std::floor(p.z() / cell)));
  };
  std::unordered_map<std::int64_t, std::vector<int>> buckets;
  std::vector<char> accepted(n, 0);
  for (int i : visit) {
    const Vec3& p = points[std::size_t(i)];
    const Vec3i c = cell_of(p);
    bool ok = true;
    for (int dz = -1; dz <= 1 && ok; ++dz)
      for (int dy = -1; dy <= 1 && ok; ++dy)
        for (int dx = -1; dx <= 1 && ok; ++dx) {
          auto it = buckets.find(key(c + Vec3i(dx, dy, dz)));
          if (it == buckets.end()) continue;
          for (int j : it->second) {
            const double r = std::min(radii[std::size_t(i)], radii[std::size_t(j)]);
            if ((points[std::size_t(j)] - p).squaredNorm() < r * r) {
              ok = false;
              break;
            }
          }
        }
    if (!ok) continue;
    accepted[std::size_t(i)] = 1;
    buckets[key(c)].push_back(i);
  }
  std::vector<int> out;
  for (int i : order)
    if (accepted[std::size_t(i)]) out.push_back(i);
  return out;
}

PointCloud poisson_disc_homogenize(const PointCloud& cloud, const std::vector<double>& radii, std::uint64_t seed) {
  return cloud.subset(poisson_disc_indices(cloud.points, radii, seed));
}

PointCloud poisson_disc_homogenize(const PointCloud& cloud, double radius_nm, std::uint64_t seed) {
  return poisson_disc_homogenize(cloud, std::vector<double>(cloud.size(), radius_nm), seed);
}

PointCloud remove_small_components(const PointCloud& cloud, const std::vector<double>& radii, int min_size) {
  const int n = int(cloud.size());
  if (n == 0 || min_size <= 1) return cloud;
  const KdTree tree(cloud.points);
  const double rmax = *std::max_element(radii.begin(), radii.end());
  std::vector<int> comp(std::size_t(n), -1);
  int ncomp = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (comp[std::size_t(s)] >= 0) continue;
    comp[std::size_t(s)] = ncomp;
    stack.assign(1, s);
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (const Neighbor& nb : tree.radius(cloud.points[std::size_t(i)], 2.0 * rmax)) {
        if (comp[std::size_t(nb.index)] >= 0) continue;
        const double r = 2.0 * std::max(radii[std::size_t(i)], radii[std::size_t(nb.index)]);
        if (nb.dist2 > r * r) continue;
        comp[std::size_t(nb.index)] = ncomp;
        stack.push_back(nb.index);
      }
    }
    ++ncomp;
  }
  std::vector<int> count(std::size_t(ncomp), 0);
  for (int c : comp) ++count[std::size_t(c)];
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (count[std::size_t(comp[std::size_t(i)])] >= min_size) keep.push_back(i);
  return cloud.subset(keep);
}

PointCloud curvature_adaptive_densify(const PointCloud& cloud, const VoxelGrid& mask, const MedialParams& params_in) {
  const MedialParams params = params_in.resolved(mask.grid.min_spacing());
  params.validate();
  if (cloud.empty()) return {};
  const double smin = params.spacing_min_nm, smax = params.spacing_max_nm;
  const KdTree tree(cloud.points);
  const std::vector<int> seeds = poisson_disc_indices(cloud.points, std::vector<double>(cloud.size(), smax),
                                                      params.rng_seed);
  const double fit_radius = 2.0 * smax;

  std::vector<std::vector<Vec3>> cand(seeds.size());
  std::vector<std::vector<double>> cand_s(seeds.size()), cand_k(seeds.size());
  const int ns = int(seeds.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (int si = 0; si < ns; ++si) {
    const Vec3 p = cloud.points[std::size_t(seeds[std::size_t(si)])];
    auto found = tree.radius(p, fit_radius);
    if (int(found.size()) < params.k_neighbors) found = tree.knn(p, params.k_neighbors);
    std::vector<Vec3> pts;
    pts.reserve(found.size());
    for (const Neighbor& nb : found) pts.push_back(cloud.points[std::size_t(nb.index)]);
    PcaResult pca = pca_frame(pts);
    double kmax = 0.0;
    MongeCoeffs m;
    if (!pca.degenerate) {
      pca.frame.origin = p;
      m = fit_monge(pts, {}, pca.frame);
    }
    if (!m.ok) {
      // Keep the seed itself; nothing reliable to lift candidates onto.
      cand[std::size_t(si)].push_back(p);
      cand_s[std::size_t(si)].push_back(smax);
      cand_k[std::size_t(si)].push_back(0.0);
      continue;
    }
    kmax = m.k_max();
    const double s = std::clamp(kmax > 0.0 ? params.curvature_spacing_factor / kmax : smax, smin, smax);
    const double row = s * std::sqrt(3.0) / 2.0;
    const int nr = int(std::ceil(smax / row));
    for (int j = -nr; j <= nr; ++j) {
      const double y = j * row;
      const double shift = (j & 1) ? 0.5 * s : 0.0;
      const int nc = int(std::ceil(smax / s)) + 1;
      for (int i = -nc; i <= nc; ++i) {
        const double x = i * s + shift;
        if (x * x + y * y > smax * smax) continue;
        const Vec3 w = m.frame.to_world({x, y, m.height(x, y)});
        if (mask.label_at(w) == 0) continue;
        cand[std::size_t(si)].push_back(w);
        cand_s[std::size_t(si)].push_back(s);
        cand_k[std::size_t(si)].push_back(kmax);
      }
    }
  }
  PointCloud out;
  auto& sp = out.attributes["spacing"];
  auto& km = out.attributes["k_max"];
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    out.points.insert(out.points.end(), cand[si].begin(), cand[si].end());
    sp.insert(sp.end(), cand_s[si].begin(), cand_s[si].end());
    km.insert(km.end(), cand_k[si].begin(), cand_k[si].end());
  }
  return out;
}

PointCloud enforce_single_layer(const PointCloud& cloud, const MedialParams& params) {
  params.validate();
  const int n = int(cloud.size());
  const int k = params.k_neighbors;
  if (n <= k) return cloud;
  const KdTree tree(cloud.points);

  std::vector<double> disp(std::size_t(n), 0.0), sigma(std::size_t(n), 0.0);
  std::vector<Vec3> normal(std::size_t(n), Vec3::UnitZ());
  std::vector<std::vector<int>> knn(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 256)
  for (int i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[std::size_t(i)];
    const auto nb = tree.knn(p, k, i);
    std::vector<Vec3> pts;
    double s = 0.0;
    for (const Neighbor& q : nb) {
      pts.push_back(cloud.points[std::size_t(q.index)]);
      knn[std::size_t(i)].push_back(q.index);
      s += std::sqrt(q.dist2);
    }
    sigma[std::size_t(i)] = s / double(nb.size());
    const PcaResult pca = pca_frame(pts);
    normal[std::size_t(i)] = pca.frame.n;
    const Vec3 l = pca.frame.to_local(p);
    const MongeCoeffs m = pca.degenerate ? MongeCoeffs{} : fit_monge(pts, {}, pca.frame);
    disp[std::size_t(i)] = m.ok ? l.z() - m.height(l.x(), l.y()) : l.z();
  }

  std::vector<char> alive(std::size_t(n), 0);
  for (int i = 0; i < n; ++i)
    alive[std::size_t(i)] = std::abs(disp[std::size_t(i)]) <= params.thickness_factor * sigma[std::size_t(i)];

  std::vector<int> seeds;
  for (int i = 0; i < n; ++i)
    if (alive[std::size_t(i)]) seeds.push_back(i);
  std::stable_sort(seeds.begin(), seeds.end(),
                   [&](int a, int b) { return std::abs(disp[std::size_t(a)]) < std::abs(disp[std::size_t(b)]); });

  std::vector<char> visited(std::size_t(n), 0), accepted(std::size_t(n), 0);
  auto conflicts = [&](int i) {
    const Vec3& p = cloud.points[std::size_t(i)];
    const Vec3& nrm = normal[std::size_t(i)];
    const double s = sigma[std::size_t(i)];
    const double thr = params.thickness_factor * s;
    for (const Neighbor& q : tree.radius(p, 2.0 * s)) {
      if (!accepted[std::size_t(q.index)]) continue;
      const Vec3 d = cloud.points[std::size_t(q.index)] - p;
      const double h = std::abs(d.dot(nrm));
      const double t = (d - d.dot(nrm) * nrm).norm();
      if (t < s && h > thr && h <= 2.0 * s) return true;
    }
    return false;
  };
  std::deque<int> queue;
  for (int s : seeds) {
    if (visited[std::size_t(s)]) continue;
    visited[std::size_t(s)] = 1;
    queue.assign(1, s);
    while (!queue.empty()) {
      const int i = queue.front();
      queue.pop_front();
      if (conflicts(i)) continue;
      accepted[std::size_t(i)] = 1;
      for (int j : knn[std::size_t(i)]) {
        if (visited[std::size_t(j)] || !alive[std::size_t(j)]) continue;
        visited[std::size_t(j)] = 1;
        queue.push_back(j);
      }
    }
  }
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (accepted[std::size_t(i)]) keep.push_back(i);
  return cloud.subset(keep);
}

PointCloud extract_medial_surface(const VoxelGrid& mask, const MedialParams& params_in) {
  const MedialParams params = params_in.resolved(mask.grid.min_spacing());
  params.validate();
  const PointCloud p0 = voxels_to_points(mask);
  if (int(p0.size()) < params.k_neighbors + 1) throw std::invalid_argument("medial: too few foreground voxels");

  const PointCloud projected = mls_project(p0, params, &p0);
  PointCloud dense = curvature_adaptive_densify(projected, mask, params);
  dense = enforce_single_layer(dense, params);
  PointCloud thin = poisson_disc_homogenize(dense, dense.attributes["spacing"], params.rng_seed);
  thin = remove_small_components(thin, thin.attributes["spacing"], params.min_component_size);
  if (thin.empty()) return thin;
  PointCloud final = mls_project(thin, params, &p0);

  std::vector<int> keep;
  for (int i = 0; i < int(final.size()); ++i)
    if (mask.label_at(final.points[std::size_t(i)]) != 0) keep.push_back(i);
  return final.subset(keep);
}

}  // namespace surfora
