#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"

#include <vector>

namespace surfora {

/// Undirected point graph; adjacency lists are sorted and symmetric.
struct PointGraph {
  std::vector<Vec3> points;
  std::vector<std::vector<int>> adj;

  std::size_t size() const { return points.size(); }
  std::size_t num_edges() const;
};

/// Symmetrized k-nearest-neighbour graph.
PointGraph knn_graph(const std::vector<Vec3>& points, int k);

/// Connected component per node, ids ordered by smallest node index.
std::vector<int> graph_components(const PointGraph& g, int* count = nullptr);

struct GeodesicResult {
  std::vector<double> distance;  // +inf where no source is reachable
  bool fallback = false;         // linear solve failed, Dijkstra distances returned
};

/// Heat-method geodesics on a triangle mesh (cotangent Laplacian, lumped mass,
/// t = time_factor * mean_edge^2).
GeodesicResult heat_geodesics(const TriangleMesh& mesh, const std::vector<int>& sources, double time_factor = 1.0);

/// Heat-method geodesics on a point graph (Gaussian-weighted graph Laplacian
/// with bandwidth = mean edge length, degree mass, tangent-plane gradients).
GeodesicResult heat_geodesics(const PointGraph& graph, const std::vector<int>& sources, double time_factor = 1.0);

/// Exact shortest paths along edges with Euclidean lengths.
std::vector<double> dijkstra(const PointGraph& graph, const std::vector<int>& sources);
std::vector<double> dijkstra(const TriangleMesh& mesh, const std::vector<int>& sources);

/// Spearman rank correlation over entries finite in both inputs.
double rank_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace surfora
