#pragma once

#include "surfora/grid.hpp"
#include "surfora/heat.hpp"
#include "surfora/point_cloud.hpp"

#include <vector>

namespace surfora {

struct OrientParams {
  int k_neighbors = 12;
  double tau = 0.2;            // minimum |<n_i, n_j>| for an edge to be kept
  double alpha_edge = 2.0;     // geodesic scale in the edge weight
  double alpha_smooth = 0.75;  // retention in normal smoothing
  int voting_iterations = 5;
  double heat_time_factor = 1.0;
  int seed_vertex = -1;        // negative: point nearest each component centroid
  int smoothing_iterations = 1;

  void validate() const;
};

/// Unoriented normals from a local quadratic fit with slope correction. Points
/// whose neighbourhood cannot support the fit get the PCA normal and are flagged.
PointCloud estimate_normals_jet(const PointCloud& cloud, int k, std::vector<bool>* degenerate = nullptr);

struct OrientationEdge {
  int i, j;  // i < j
  double w;
};

struct OrientationGraph {
  PointGraph graph;                // retained edges only
  std::vector<OrientationEdge> edges;
  std::vector<std::vector<std::pair<int, double>>> weights;  // per node (neighbour, w)
  std::vector<double> geodesic;    // heat distance from the component seed
  std::vector<int> component;
  std::vector<int> seeds;          // one per component
  bool geodesic_fallback = false;
};

/// w_ij = exp(-|g_i - g_j| / (alpha * |p_i - p_j|)) * |<n_i, n_j>|.
double orientation_weight(double gi, double gj, const Vec3& pi, const Vec3& pj, const Vec3& ni, const Vec3& nj,
                          double alpha);

/// k-NN graph restricted to edges with |<n_i, n_j>| >= tau, with heat geodesics
/// from one seed per component.
OrientationGraph build_orientation_graph(const PointCloud& cloud, const OrientParams& params);

struct OrientStats {
  int tree_flips = 0;
  int vote_flips = 0;
  int components = 0;
  double edge_consistency = 0.0;  // fraction of retained edges with <n_i, n_j> > 0
  bool geodesic_fallback = false;
};

/// Maximum-weight spanning tree propagation followed by weighted sign voting.
PointCloud orient_normals_graph(const PointCloud& cloud, const OrientParams& params, OrientStats* stats = nullptr);

/// Same, reusing a prebuilt graph.
PointCloud orient_normals_graph(const PointCloud& cloud, const OrientationGraph& graph, const OrientParams& params,
                                OrientStats* stats = nullptr);

double edge_consistency(const std::vector<Vec3>& normals, const OrientationGraph& graph);

/// n_i <- alpha n_i + (1 - alpha) * weighted mean of neighbours, renormalised;
/// an update that would reverse a normal is skipped.
PointCloud smooth_normals_geodesic(const PointCloud& cloud, const OrientationGraph& graph, const OrientParams& params);
PointCloud smooth_normals_geodesic(const PointCloud& cloud, const OrientParams& params);

/// Flips n where phi(p + eps n) < phi(p).
PointCloud orient_normals_sdf(const PointCloud& cloud, const ScalarField& field, double eps_nm, int* flips = nullptr,
                              int* clamped = nullptr);

}  // namespace surfora
