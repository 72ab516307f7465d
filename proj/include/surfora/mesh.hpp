#pragma once

#include "surfora/grid.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace surfora {

using Face = std::array<int, 3>;

/// Indexed triangle surface in nm with optional per-vertex data.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> normals;                             // empty or one per vertex
  std::map<std::string, std::vector<double>> channels;  // each one value per vertex

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }
  bool has_normals() const { return !normals.empty(); }

  /// Throws when a face references a missing vertex or a channel has the wrong length.
  void validate() const;
};

/// Undirected edge -> incident faces, sorted by (min vertex, max vertex).
struct EdgeFaces {
  int a = 0, b = 0;  // a < b
  std::vector<int> faces;
};
std::vector<EdgeFaces> edge_faces(const TriangleMesh& mesh);

/// True iff the vertex touches an edge with exactly one incident face.
std::vector<bool> boundary_vertices(const TriangleMesh& mesh);

/// Vertex adjacency lists (sorted, unique).
std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh);

/// Component id per face (edge-connected), ids ordered by smallest face index.
std::vector<int> face_components(const TriangleMesh& mesh, int* count = nullptr);

/// Component id per vertex (connected through faces); isolated vertices get their own id.
std::vector<int> vertex_components(const TriangleMesh& mesh, int* count = nullptr);

/// Sub-mesh made of the selected faces; unreferenced vertices dropped, data carried over.
TriangleMesh extract_faces(const TriangleMesh& mesh, const std::vector<int>& faces);

/// Splits into connected components (ordered by smallest face index).
std::vector<TriangleMesh> split_components(const TriangleMesh& mesh);

/// Concatenates meshes, offsetting indices; channels missing in a part are filled with NaN.
TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
Vec3 face_normal(const TriangleMesh& mesh, int f);  // unit, from winding

/// Area-weighted vertex normals from the face winding.
std::vector<Vec3> compute_vertex_normals(const TriangleMesh& mesh);

double surface_area(const TriangleMesh& mesh);

/// V - E + F.
int euler_characteristic(const TriangleMesh& mesh);

struct CleanupStats {
  int degenerate_faces = 0;
  int duplicate_faces = 0;
  int nonmanifold_faces = 0;
  int unreferenced_vertices = 0;
};

/// Drops degenerate faces, duplicated faces (any winding), faces beyond the
/// first two on an edge, then unreferenced vertices. Idempotent.
TriangleMesh mesh_cleanup(const TriangleMesh& mesh, CleanupStats* stats = nullptr);

/// Removes the flagged vertices with their incident faces, then unreferenced vertices.
TriangleMesh remove_vertices(const TriangleMesh& mesh, const std::vector<bool>& remove);

/// Per-face value as the mean of its vertex values.
std::vector<double> vertex_to_face_average(const TriangleMesh& mesh, const std::vector<double>& values);

}  // namespace surfora
