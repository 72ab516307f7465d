#include "surfora/heat.hpp"

#include "surfora/kdtree.hpp"
#include "surfora/monge.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace surfora {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

void check_sources(const std::vector<int>& sources, std::size_t n) {
  if (sources.empty()) throw std::invalid_argument("heat_geodesics: no source vertices");
  for (int s : sources)
    if (s < 0 || std::size_t(s) >= n) throw std::invalid_argument("heat_geodesics: source index out of range");
}

// Shifts so the smallest source value per component is 0; sourceless components get +inf.
void finalize(std::vector<double>& phi, const std::vector<int>& comp, int ncomp, const std::vector<int>& sources) {
  std::vector<double> base(std::size_t(ncomp), kInf);
  for (int s : sources) base[std::size_t(comp[std::size_t(s)])] = std::min(base[std::size_t(comp[std::size_t(s)])], phi[std::size_t(s)]);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double b = base[std::size_t(comp[i])];
    phi[i] = b < kInf ? std::max(0.0, phi[i] - b) : kInf;
  }
}

template <typename Graph>
std::vector<double> dijkstra_impl(std::size_t n, const std::vector<int>& sources, const Graph& neighbours) {
  std::vector<double> d(n, kInf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (int s : sources) {
    d[std::size_t(s)] = 0.0;
    pq.emplace(0.0, s);
  }
  while (!pq.empty()) {
    const auto [di, i] = pq.top();
    pq.pop();
    if (di > d[std::size_t(i)]) continue;
    neighbours(i, [&](int j, double w) {
      const double nd = di + w;
      if (nd < d[std::size_t(j)]) {
        d[std::size_t(j)] = nd;
        pq.emplace(nd, j);
      }
    });
  }
  return d;
}

}  // namespace

std::size_t PointGraph::num_edges() const {
  std::size_t e = 0;
  for (const auto& a : adj) e += a.size();
  return e / 2;
}

PointGraph knn_graph(const std::vector<Vec3>& points, int k) {
  PointGraph g;
  g.points = points;
  const int n = int(points.size());
  g.adj.resize(std::size_t(n));
  const KdTree tree(points);
  std::vector<std::vector<int>> nn(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (const Neighbor& q : tree.knn(points[std::size_t(i)], k, i)) nn[std::size_t(i)].push_back(q.index);
  for (int i = 0; i < n; ++i)
    for (int j : nn[std::size_t(i)]) {
      g.adj[std::size_t(i)].push_back(j);
      g.adj[std::size_t(j)].push_back(i);
    }
  for (auto& a : g.adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return g;
}

std::vector<int> graph_components(const PointGraph& g, int* count) {
  std::vector<int> comp(g.size(), -1);
  int next = 0;
  std::vector<int> stack;
  for (std::size_t s = 0; s < g.size(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.assign(1, int(s));
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j : g.adj[std::size_t(i)])
        if (comp[std::size_t(j)] < 0) {
          comp[std::size_t(j)] = next;
          stack.push_back(j);
        }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

std::vector<double> dijkstra(const PointGraph& graph, const std::vector<int>& sources) {
  return dijkstra_impl(graph.size(), sources, [&](int i, auto&& relax) {
    for (int j : graph.adj[std::size_t(i)])
      relax(j, (graph.points[std::size_t(i)] - graph.points[std::size_t(j)]).norm());
  });
}

std::vector<double> dijkstra(const TriangleMesh& mesh, const std::vector<int>& sources) {
  const auto adj = vertex_adjacency(mesh);
  return dijkstra_impl(mesh.vertices.size(), sources, [&](int i, auto&& relax) {
    for (int j : adj[std::size_t(i)]) relax(j, (mesh.vertices[std::size_t(i)] - mesh.vertices[std::size_t(j)]).norm());
  });
}

GeodesicResult heat_geodesics(const TriangleMesh& mesh, const std::vector<int>& sources, double time_factor) {
  const int n = int(mesh.vertices.size());
  check_sources(sources, std::size_t(n));
  if (!(time_factor > 0.0)) throw std::invalid_argument("heat time factor must be > 0");
  GeodesicResult res;

  std::vector<Trip> lt;
  lt.reserve(mesh.faces.size() * 12);
  std::vector<double> mass(std::size_t(n), 0.0);
  double edge_sum = 0.0;
  const int nf = int(mesh.faces.size());
  std::vector<double> cot(std::size_t(nf) * 3);  // cotangent of the angle at corner c
  for (int f = 0; f < nf; ++f) {
    const Face& t = mesh.faces[std::size_t(f)];
    const Vec3 p[3] = {mesh.vertices[std::size_t(t[0])], mesh.vertices[std::size_t(t[1])],
                       mesh.vertices[std::size_t(t[2])]};
    const double area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
    for (int c = 0; c < 3; ++c) {
      const Vec3 u = p[(c + 1) % 3] - p[c], v = p[(c + 2) % 3] - p[c];
      const double cr = u.cross(v).norm();
      cot[std::size_t(f) * 3 + std::size_t(c)] = cr > 0.0 ? u.dot(v) / cr : 0.0;
      mass[std::size_t(t[std::size_t(c)])] += area / 3.0;
      edge_sum += (p[(c + 1) % 3] - p[c]).norm();
    }
    for (int c = 0; c < 3; ++c) {
      // Edge opposite corner c.
      const int i = t[std::size_t((c + 1) % 3)], j = t[std::size_t((c + 2) % 3)];
      const double w = 0.5 * cot[std::size_t(f) * 3 + std::size_t(c)];
      lt.emplace_back(i, j, -w);
      lt.emplace_back(j, i, -w);
      lt.emplace_back(i, i, w);
      lt.emplace_back(j, j, w);
    }
  }
  SpMat L(n, n);
  L.setFromTriplets(lt.begin(), lt.end());
  const double h = nf > 0 ? edge_sum / (3.0 * nf) : 1.0;
  const double t = time_factor * h * h;

  int ncomp = 0;
  const auto comp = vertex_components(mesh, &ncomp);

  SpMat M(n, n);
  {
    std::vector<Trip> mt;
    for (int i = 0; i < n; ++i) mt.emplace_back(i, i, mass[std::size_t(i)] > 0.0 ? mass[std::size_t(i)] : h * h);
    M.setFromTriplets(mt.begin(), mt.end());
  }
  const SpMat A = M + t * L;
  Eigen::SimplicialLDLT<SpMat> heat(A);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  for (int s : sources) delta[s] = 1.0;
  Eigen::VectorXd u;
  if (heat.info() == Eigen::Success) u = heat.solve(delta);
  if (heat.info() != Eigen::Success || !u.allFinite()) {
    res.distance = dijkstra(mesh, sources);
    res.fallback = true;
    return res;
  }

  Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
  for (int f = 0; f < nf; ++f) {
    const Face& tri = mesh.faces[std::size_t(f)];
    const Vec3 p[3] = {mesh.vertices[std::size_t(tri[0])], mesh.vertices[std::size_t(tri[1])],
                       mesh.vertices[std::size_t(tri[2])]};
    const Vec3 nrm = (p[1] - p[0]).cross(p[2] - p[0]);
    const double a2 = nrm.norm();
    if (!(a2 > 0.0)) continue;
    const Vec3 N = nrm / a2;
    Vec3 grad = Vec3::Zero();
    for (int c = 0; c < 3; ++c) grad += u[tri[std::size_t(c)]] * N.cross(p[(c + 2) % 3] - p[(c + 1) % 3]);
    grad /= a2;
    const double gn = grad.norm();
    if (!(gn > 0.0)) continue;
    const Vec3 X = -grad / gn;
    for (int c = 0; c < 3; ++c) {
      const Vec3 e1 = p[(c + 1) % 3] - p[c], e2 = p[(c + 2) % 3] - p[c];
      // cot of the angle opposite e1 is at corner c+2, opposite e2 at corner c+1.
      const double c1 = cot[std::size_t(f) * 3 + std::size_t((c + 2) % 3)];
      const double c2 = cot[std::size_t(f) * 3 + std::size_t((c + 1) % 3)];
      div[tri[std::size_t(c)]] += 0.5 * (c1 * e1.dot(X) + c2 * e2.dot(X));
    }
  }

  const double reg = 1e-8 * (L.diagonal().sum() / std::max(n, 1));
  SpMat P = L;
  for (int i = 0; i < n; ++i) P.coeffRef(i, i) += reg * (mass[std::size_t(i)] > 0.0 ? mass[std::size_t(i)] / (h * h) : 1.0);
  Eigen::SimplicialLDLT<SpMat> poisson(P);
  Eigen::VectorXd phi;
  if (poisson.info() == Eigen::Success) phi = poisson.solve(-div);
  if (poisson.info() != Eigen::Success || !phi.allFinite()) {
    res.distance = dijkstra(mesh, sources);
    res.fallback = true;
    return res;
  }
  res.distance.assign(phi.data(), phi.data() + n);
  finalize(res.distance, comp, ncomp, sources);
  return res;
}

GeodesicResult heat_geodesics(const PointGraph& graph, const std::vector<int>& sources, double time_factor) {
  const int n = int(graph.size());
  check_sources(sources, std::size_t(n));
  if (!(time_factor > 0.0)) throw std::invalid_argument("heat time factor must be > 0");
  GeodesicResult res;

  double edge_sum = 0.0;
  std::size_t edges = 0;
  for (int i = 0; i < n; ++i)
    for (int j : graph.adj[std::size_t(i)])
      if (j > i) {
        edge_sum += (graph.points[std::size_t(i)] - graph.points[std::size_t(j)]).norm();
        ++edges;
      }
  if (edges == 0) {
    res.distance.assign(std::size_t(n), kInf);
    for (int s : sources) res.distance[std::size_t(s)] = 0.0;
    return res;
  }
  const double sigma = edge_sum / double(edges);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  std::vector<std::vector<double>> w(graph.size());
  std::vector<Trip> lt;
  std::vector<double> deg(std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j : graph.adj[std::size_t(i)]) {
      const double wij = std::exp(-(graph.points[std::size_t(i)] - graph.points[std::size_t(j)]).squaredNorm() * inv2s2);
      w[std::size_t(i)].push_back(wij);
      deg[std::size_t(i)] += wij;
      lt.emplace_back(i, j, -wij);
    }
    lt.emplace_back(i, i, deg[std::size_t(i)]);
  }
  SpMat L(n, n);
  L.setFromTriplets(lt.begin(), lt.end());
  // Degree-normalised graph Laplacian approximates (sigma^2 / 2) times Laplace-Beltrami.
  const double tau = time_factor * sigma * sigma;
  const double tg = 2.0 * tau / (sigma * sigma);

  SpMat M(n, n);
  {
    std::vector<Trip> mt;
    for (int i = 0; i < n; ++i) mt.emplace_back(i, i, deg[std::size_t(i)] > 0.0 ? deg[std::size_t(i)] : 1.0);
    M.setFromTriplets(mt.begin(), mt.end());
  }
  Eigen::SimplicialLDLT<SpMat> heat(SpMat(M + tg * L));
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  for (int s : sources) delta[s] = 1.0;
  Eigen::VectorXd u;
  if (heat.info() == Eigen::Success) u = heat.solve(delta);
  if (heat.info() != Eigen::Success || !u.allFinite()) {
    res.distance = dijkstra(graph, sources);
    res.fallback = true;
    return res;
  }

  // Normalised negative gradient by tangent-plane least squares.
  std::vector<Vec3> X(std::size_t(n), Vec3::Zero());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.adj[std::size_t(i)];
    if (nb.size() < 2) continue;
    std::vector<Vec3> pts;
    pts.push_back(graph.points[std::size_t(i)]);
    for (int j : nb) pts.push_back(graph.points[std::size_t(j)]);
    const PcaResult pca = pca_frame(pts);
    Eigen::Matrix2d AtA = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Atb = Eigen::Vector2d::Zero();
    for (std::size_t q = 0; q < nb.size(); ++q) {
      const Vec3 d = graph.points[std::size_t(nb[q])] - graph.points[std::size_t(i)];
      const Eigen::Vector2d a(d.dot(pca.frame.t1), d.dot(pca.frame.t2));
      const double wq = w[std::size_t(i)][q];
      AtA += wq * a * a.transpose();
      Atb += wq * a * (u[nb[q]] - u[i]);
    }
    const Eigen::Vector2d g = AtA.ldlt().solve(Atb);
    if (!g.allFinite()) continue;
    const Vec3 grad = g.x() * pca.frame.t1 + g.y() * pca.frame.t2;
    const double gn = grad.norm();
    if (gn > 0.0) X[std::size_t(i)] = -grad / gn;
  }

  Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.adj[std::size_t(i)];
    double s = 0.0;
    for (std::size_t q = 0; q < nb.size(); ++q) {
      const int j = nb[q];
      s += w[std::size_t(i)][q] * (0.5 * (X[std::size_t(i)] + X[std::size_t(j)])).dot(graph.points[std::size_t(j)] - graph.points[std::size_t(i)]);
    }
    div[i] = s;
  }

  const double reg = 1e-8 * (L.diagonal().sum() / n);
  SpMat P = L;
  for (int i = 0; i < n; ++i) P.coeffRef(i, i) += reg;
  Eigen::SimplicialLDLT<SpMat> poisson(P);
  Eigen::VectorXd phi;
  if (poisson.info() == Eigen::Success) phi = poisson.solve(-div);
  if (poisson.info() != Eigen::Success || !phi.allFinite()) {
    res.distance = dijkstra(graph, sources);
    res.fallback = true;
    return res;
  }
  int ncomp = 0;
  const auto comp = graph_components(graph, &ncomp);
  res.distance.assign(phi.data(), phi.data() + n);
  finalize(res.distance, comp, ncomp, sources);
  return res;
}

double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    if (std::isfinite(a[i]) && std::isfinite(b[i])) idx.push_back(int(i));
  const std::size_t n = idx.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  auto ranks = [&](const std::vector<double>& v) {
    std::vector<int> o(n);
    std::iota(o.begin(), o.end(), 0);
    std::sort(o.begin(), o.end(), [&](int x, int y) { return v[std::size_t(idx[std::size_t(x)])] < v[std::size_t(idx[std::size_t(y)])]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[std::size_t(idx[std::size_t(o[j + 1])])] == v[std::size_t(idx[std::size_t(o[i])])]) ++j;
      for (std::size_t q = i; q <= j; ++q) r[std::size_t(o[q])] = 0.5 * double(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace surfora
