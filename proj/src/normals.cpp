#include "surfora/normals.hpp"

#include "surfora/fields.hpp"
#include "surfora/kdtree.hpp"
#include "surfora/monge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace surfora {

void OrientParams::validate() const {
  if (k_neighbors < 3) throw std::invalid_argument("k_neighbors must be >= 3");
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in [0, 1)");
  if (!(alpha_edge > 0.0)) throw std::invalid_argument("alpha_edge must be > 0");
  if (!(alpha_smooth >= 0.0 && alpha_smooth <= 1.0)) throw std::invalid_argument("alpha_smooth must be in [0, 1]");
  if (voting_iterations < 0) throw std::invalid_argument("voting_iterations must be >= 0");
  if (!(heat_time_factor > 0.0)) throw std::invalid_argument("heat_time_factor must be > 0");
  if (smoothing_iterations < 0) throw std::invalid_argument("smoothing_iterations must be >= 0");
}

PointCloud estimate_normals_jet(const PointCloud& cloud, int k, std::vector<bool>* degenerate) {
  const int n = int(cloud.size());
  if (n < k + 1) throw std::invalid_argument("estimate_normals_jet: need at least k + 1 points");
  const KdTree tree(cloud.points);
  PointCloud out = cloud;
  out.normals.assign(std::size_t(n), Vec3::UnitZ());
  std::vector<char> flag(std::size_t(n), 0);
#pragma omp parallel for schedule(dynamic, 256)
  for (int i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[std::size_t(i)];
    std::vector<Vec3> pts;
    for (const Neighbor& q : tree.knn(p, k + 1)) pts.push_back(cloud.points[std::size_t(q.index)]);
    PcaResult pca = pca_frame(pts);
    pca.frame.origin = p;
    const MongeCoeffs m = pca.degenerate ? MongeCoeffs{} : fit_monge(pts, {}, pca.frame);
    if (m.ok) {
      out.normals[std::size_t(i)] = m.normal_at(0.0, 0.0);
    } else {
      out.normals[std::size_t(i)] = pca.frame.n;
      flag[std::size_t(i)] = 1;
    }
  }
  if (degenerate) degenerate->assign(flag.begin(), flag.end());
  return out;
}

double orientation_weight(double gi, double gj, const Vec3& pi, const Vec3& pj, const Vec3& ni, const Vec3& nj,
                          double alpha) {
  const double len = (pi - pj).norm();
  const double dg = std::abs(gi - gj);
  const double geo = dg == 0.0 ? 1.0 : (len > 0.0 && std::isfinite(dg) ? std::exp(-dg / (alpha * len)) : 0.0);
  return geo * std::min(1.0, std::abs(ni.dot(nj)));
}

OrientationGraph build_orientation_graph(const PointCloud& cloud, const OrientParams& params) {
  params.validate();
  if (!cloud.has_normals()) throw std::invalid_argument("orientation requires normals");
  const int n = int(cloud.size());
  if (n < 2) throw std::invalid_argument("orientation requires at least 2 points");
  OrientationGraph og;
  const PointGraph knn = knn_graph(cloud.points, std::min(params.k_neighbors, n - 1));
  og.graph.points = cloud.points;
  og.graph.adj.resize(std::size_t(n));
  for (int i = 0; i < n; ++i)
    for (int j : knn.adj[std::size_t(i)])
      if (std::abs(cloud.normals[std::size_t(i)].dot(cloud.normals[std::size_t(j)])) >= params.tau)
        og.graph.adj[std::size_t(i)].push_back(j);
  if (og.graph.num_edges() == 0) throw std::runtime_error("orientation graph disconnected at tau");

  int ncomp = 0;
  og.component = graph_components(og.graph, &ncomp);
  std::vector<Vec3> centroid(std::size_t(ncomp), Vec3::Zero());
  std::vector<int> count(std::size_t(ncomp), 0);
  for (int i = 0; i < n; ++i) {
    centroid[std::size_t(og.component[std::size_t(i)])] += cloud.points[std::size_t(i)];
    ++count[std::size_t(og.component[std::size_t(i)])];
  }
  og.seeds.assign(std::size_t(ncomp), -1);
  std::vector<double> best(std::size_t(ncomp), std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) {
    const int c = og.component[std::size_t(i)];
    const double d = (cloud.points[std::size_t(i)] - centroid[std::size_t(c)] / count[std::size_t(c)]).squaredNorm();
    if (d < best[std::size_t(c)]) {
      best[std::size_t(c)] = d;
      og.seeds[std::size_t(c)] = i;
    }
  }
  if (params.seed_vertex >= 0) {
    if (params.seed_vertex >= n) throw std::invalid_argument("seed_vertex out of range");
    og.seeds[std::size_t(og.component[std::size_t(params.seed_vertex)])] = params.seed_vertex;
  }
  const GeodesicResult geo = heat_geodesics(og.graph, og.seeds, params.heat_time_factor);
  og.geodesic = geo.distance;
  og.geodesic_fallback = geo.fallback;

  og.weights.resize(std::size_t(n));
  for (int i = 0; i < n; ++i)
    for (int j : og.graph.adj[std::size_t(i)]) {
      const double w = orientation_weight(og.geodesic[std::size_t(i)], og.geodesic[std::size_t(j)],
                                          cloud.points[std::size_t(i)], cloud.points[std::size_t(j)],
                                          cloud.normals[std::size_t(i)], cloud.normals[std::size_t(j)],
                                          params.alpha_edge);
      og.weights[std::size_t(i)].emplace_back(j, w);
      if (i < j) og.edges.push_back({i, j, w});
    }
  return og;
}

double edge_consistency(const std::vector<Vec3>& normals, const OrientationGraph& graph) {
  if (graph.edges.empty()) return 1.0;
  std::size_t good = 0;
  for (const auto& e : graph.edges)
    if (normals[std::size_t(e.i)].dot(normals[std::size_t(e.j)]) > 0.0) ++good;
  return double(good) / double(graph.edges.size());
}

PointCloud orient_normals_graph(const PointCloud& cloud, const OrientParams& params, OrientStats* stats) {
  return orient_normals_graph(cloud, build_orientation_graph(cloud, params), params, stats);
}

PointCloud orient_normals_graph(const PointCloud& cloud, const OrientationGraph& og, const OrientParams& params,
                                OrientStats* stats) {
  const int n = int(cloud.size());
  PointCloud out = cloud;
  auto& nrm = out.normals;
  OrientStats st;
  st.components = int(og.seeds.size());
  st.geodesic_fallback = og.geodesic_fallback;

  // Prim's algorithm on the max-weight tree; ties by (min index, max index).
  using Item = std::tuple<double, int, int, int, int>;  // w, -lo, -hi, parent, child
  std::priority_queue<Item> heap;
  std::vector<char> done(std::size_t(n), 0);
  auto push_edges = [&](int i) {
    for (const auto& [j, w] : og.weights[std::size_t(i)])
      if (!done[std::size_t(j)]) heap.emplace(w, -std::min(i, j), -std::max(i, j), i, j);
  };
  std::vector<int> roots = og.seeds;
  for (int i = 0; i < n; ++i)
    if (og.graph.adj[std::size_t(i)].empty()) roots.push_back(i);
  for (int root : roots) {
    if (done[std::size_t(root)]) continue;
    done[std::size_t(root)] = 1;
    push_edges(root);
    while (!heap.empty()) {
      const auto [w, lo, hi, parent, child] = heap.top();
      heap.pop();
      if (done[std::size_t(child)]) continue;
      done[std::size_t(child)] = 1;
      if (nrm[std::size_t(parent)].dot(nrm[std::size_t(child)]) < 0.0) {
        nrm[std::size_t(child)] = -nrm[std::size_t(child)];
        ++st.tree_flips;
      }
      push_edges(child);
    }
  }

  for (int it = 0; it < params.voting_iterations; ++it) {
    int flips = 0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (const auto& [j, w] : og.weights[std::size_t(i)]) {
        const double d = nrm[std::size_t(i)].dot(nrm[std::size_t(j)]);
        s += w * (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0);
      }
      if (s < 0.0) {
        nrm[std::size_t(i)] = -nrm[std::size_t(i)];
        ++flips;
      }
    }
    st.vote_flips += flips;
    if (flips == 0) break;
  }
  st.edge_consistency = edge_consistency(nrm, og);
  if (stats) *stats = st;
  return out;
}

PointCloud smooth_normals_geodesic(const PointCloud& cloud, const OrientationGraph& og, const OrientParams& params) {
  params.validate();
  PointCloud out = cloud;
  const int n = int(cloud.size());
  const double a = params.alpha_smooth;
  for (int it = 0; it < params.smoothing_iterations; ++it) {
    std::vector<Vec3> next(out.normals);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      Vec3 acc = Vec3::Zero();
      double ws = 0.0;
      for (const auto& [j, w] : og.weights[std::size_t(i)]) {
        acc += w * out.normals[std::size_t(j)];
        ws += w;
      }
      if (!(ws > 0.0)) continue;
      const Vec3 cand = a * out.normals[std::size_t(i)] + (1.0 - a) * (acc / ws);
      const double len = cand.norm();
      if (!(len > 0.0)) continue;
      const Vec3 u = cand / len;
      if (u.dot(out.normals[std::size_t(i)]) > 0.0) next[std::size_t(i)] = u;
    }
    out.normals.swap(next);
  }
  return out;
}

PointCloud smooth_normals_geodesic(const PointCloud& cloud, const OrientParams& params) {
  return smooth_normals_geodesic(cloud, build_orientation_graph(cloud, params), params);
}

PointCloud orient_normals_sdf(const PointCloud& cloud, const ScalarField& field, double eps_nm, int* flips,
                              int* clamped) {
  if (!cloud.has_normals()) throw std::invalid_argument("orient_normals_sdf requires normals");
  if (!(eps_nm > 0.0)) throw std::invalid_argument("eps_nm must be > 0");
  PointCloud out = cloud;
  int nf = 0, nc = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    bool c0 = false, c1 = false;
    const Vec3& p = out.points[i];
    const double f0 = sample_field(field, p, &c0);
    const double f1 = sample_field(field, p + eps_nm * out.normals[i], &c1);
    if (c0 || c1) ++nc;
    if (f1 < f0) {
      out.normals[i] = -out.normals[i];
      ++nf;
    }
  }
  if (flips) *flips = nf;
  if (clamped) *clamped = nc;
  return out;
}

}  // namespace surfora
