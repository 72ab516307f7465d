#include "surfora/fields.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>
#include <unordered_map>

namespace surfora {

namespace {

// Corner c of a cell sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct Edge {
  int c0, c1, axis;
};

struct CaseTable {
  std::array<Edge, 12> edges{};
  int edge_of[8][8];
  std::array<std::vector<std::array<int, 3>>, 256> tris;

  CaseTable() {
    for (auto& row : edge_of) std::fill(std::begin(row), std::end(row), -1);
    int e = 0;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 8; ++c)
        if (!(c & (1 << a))) {
          edges[std::size_t(e)] = {c, c | (1 << a), a};
          edge_of[c][c | (1 << a)] = edge_of[c | (1 << a)][c] = e;
          ++e;
        }

    // Face corners listed counter-clockwise as seen from outside the cell.
    std::array<std::array<int, 4>, 6> faces;
    for (int a = 0; a < 3; ++a) {
      const int u = (a + 1) % 3, v = (a + 2) % 3;
      for (int s = 0; s < 2; ++s) {
        std::array<int, 4> q;
        const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int k = 0; k < 4; ++k) q[std::size_t(k)] = (s << a) | (uv[k][0] << u) | (uv[k][1] << v);
        if (s == 0) std::reverse(q.begin(), q.end());
        faces[std::size_t(2 * a + s)] = q;
      }
    }

    for (int m = 0; m < 256; ++m) {
      int next[12];
      std::fill(std::begin(next), std::end(next), -1);
      for (const auto& q : faces) {
        // Crossing edges in cyclic order, tagged with whether they enter the inside.
        std::vector<std::pair<int, bool>> cross;
        for (int k = 0; k < 4; ++k) {
          const int a = q[std::size_t(k)], b = q[std::size_t((k + 1) % 4)];
          const bool ia = m & (1 << a), ib = m & (1 << b);
          if (ia != ib) cross.emplace_back(edge_of[a][b], ib);
        }
        const int n = int(cross.size());
        for (int p = 0; p < n; ++p) {
          if (!cross[std::size_t(p)].second) continue;
          for (int d = 1; d < n; ++d) {
            const auto& c = cross[std::size_t((p + d) % n)];
            if (!c.second) {
              next[cross[std::size_t(p)].first] = c.first;
              break;
            }
          }
        }
      }
      bool used[12] = {};
      for (int start = 0; start < 12; ++start) {
        if (next[start] < 0 || used[start]) continue;
        std::vector<int> loop;
        for (int e = start; !used[e]; e = next[e]) {
          used[e] = true;
          loop.push_back(e);
        }
        for (std::size_t i = 1; i + 1 < loop.size(); ++i) tris[std::size_t(m)].push_back({loop[0], loop[i], loop[i + 1]});
      }
    }
  }
};

const CaseTable& table() {
  static const CaseTable t;
  return t;
}

}  // namespace

TriangleMesh marching_cubes(const ScalarField& field, double iso) {
  const GridGeometry& g = field.grid;
  if (g.dims.minCoeff() < 2) throw std::invalid_argument("marching_cubes: field needs at least 2 samples per axis");
  if (Index(field.values.size()) != g.size()) throw std::invalid_argument("marching_cubes: field size mismatch");
  const CaseTable& tab = table();
  TriangleMesh mesh;
  std::unordered_map<Index, int> vertex_of;

  auto vertex = [&](int i, int j, int k, const Edge& e) {
    const Vec3i p0(i + (e.c0 & 1), j + ((e.c0 >> 1) & 1), k + ((e.c0 >> 2) & 1));
    const Index key = g.linear(p0) * 3 + e.axis;
    auto it = vertex_of.find(key);
    if (it != vertex_of.end()) return it->second;
    Vec3i p1 = p0;
    p1[e.axis] += 1;
    const double v0 = field(p0.x(), p0.y(), p0.z()), v1 = field(p1.x(), p1.y(), p1.z());
    const double t = std::clamp((iso - v0) / (v1 - v0), 1e-7, 1.0 - 1e-7);
    const int id = int(mesh.vertices.size());
    mesh.vertices.push_back((1.0 - t) * g.world(p0) + t * g.world(p1));
    vertex_of.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < g.dims.z(); ++k)
    for (int j = 0; j + 1 < g.dims.y(); ++j)
      for (int i = 0; i + 1 < g.dims.x(); ++i) {
        int m = 0;
        for (int c = 0; c < 8; ++c)
          if (field(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) < iso) m |= 1 << c;
        if (m == 0 || m == 255) continue;
        for (const auto& t : tab.tris[std::size_t(m)]) {
          Face f;
          for (int q = 0; q < 3; ++q) f[std::size_t(q)] = vertex(i, j, k, tab.edges[std::size_t(t[std::size_t(q)])]);
          mesh.faces.push_back(f);
        }
      }

  // Drop slivers that collapsed to zero area after clamping.
  std::vector<int> keep;
  keep.reserve(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    if (triangle_area(mesh.vertices[std::size_t(t[0])], mesh.vertices[std::size_t(t[1])],
                      mesh.vertices[std::size_t(t[2])]) > 0.0)
      keep.push_back(int(f));
  }
  if (keep.size() != mesh.faces.size()) return extract_faces(mesh, keep);
  return mesh;
}

}  // namespace surfora
