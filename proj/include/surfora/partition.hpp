#pragma once

#include "surfora/grid.hpp"
#include "surfora/mesh.hpp"

#include <string>
#include <vector>

namespace surfora {

enum class PartitionMethod { Connectivity, ProxySplit };

std::string to_string(PartitionMethod m);

struct LeafletPair {
  TriangleMesh inner;  // both carry a "leaflet" channel: 1 inner, 2 outer
  TriangleMesh outer;
  PartitionMethod method = PartitionMethod::Connectivity;
  int inner_components = 0;
  int outer_components = 0;
  int cut_faces = 0;          // iso faces crossed by the proxy
  int ambiguous_faces = 0;    // tangential contact resolved by majority vote
  double cut_length_nm = 0.0;
};

/// Signed side of each point relative to the proxy: <v - q, n_q> with q the
/// closest proxy point and n_q the interpolated proxy normal there.
std::vector<double> proxy_side(const std::vector<Vec3>& points, const TriangleMesh& proxy);

/// Splits a membrane isosurface into inner and outer leaflets. Two components
/// are assigned directly; otherwise iso faces are cut along the proxy.
/// `sdf` (optional) must share the frame of the meshes.
LeafletPair split_isosurface(const TriangleMesh& iso, const TriangleMesh& proxy, const ScalarField* sdf = nullptr);

}  // namespace surfora
