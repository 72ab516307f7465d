#include "surfora/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace surfora {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[std::size_t(x)] != x) {
      parent[std::size_t(x)] = parent[std::size_t(parent[std::size_t(x)])];
      x = parent[std::size_t(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[std::size_t(a)] = b;
  }
};

// Keeps the vertices flagged in `keep`, in their original order. Returns old -> new map (-1 dropped).
std::vector<int> compact_vertices(const TriangleMesh& in, const std::vector<bool>& keep, TriangleMesh& out) {
  std::vector<int> remap(in.vertices.size(), -1);
  int next = 0;
  for (std::size_t v = 0; v < in.vertices.size(); ++v)
    if (keep[v]) remap[v] = next++;
  out.vertices.clear();
  out.normals.clear();
  out.channels.clear();
  out.vertices.reserve(std::size_t(next));
  for (std::size_t v = 0; v < in.vertices.size(); ++v)
    if (keep[v]) out.vertices.push_back(in.vertices[v]);
  if (in.has_normals())
    for (std::size_t v = 0; v < in.vertices.size(); ++v)
      if (keep[v]) out.normals.push_back(in.normals[v]);
  for (const auto& [name, values] : in.channels) {
    auto& dst = out.channels[name];
    dst.reserve(std::size_t(next));
    for (std::size_t v = 0; v < in.vertices.size(); ++v)
      if (keep[v]) dst.push_back(values[v]);
  }
  return remap;
}

std::tuple<int, int, int> sorted_key(const Face& f) {
  std::array<int, 3> s = f;
  std::sort(s.begin(), s.end());
  return {s[0], s[1], s[2]};
}

}  // namespace

void TriangleMesh::validate() const {
  const int n = int(vertices.size());
  for (const Face& f : faces)
    for (int v : f)
      if (v < 0 || v >= n) throw std::invalid_argument("face references out-of-range vertex");
  if (!normals.empty() && normals.size() != vertices.size())
    throw std::invalid_argument("normal count does not match vertex count");
  for (const auto& [name, values] : channels)
    if (values.size() != vertices.size())
      throw std::invalid_argument("channel '" + name + "' length does not match vertex count");
}

std::vector<EdgeFaces> edge_faces(const TriangleMesh& mesh) {
  std::vector<std::tuple<int, int, int>> half;
  half.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (int e = 0; e < 3; ++e) {
      int a = t[std::size_t(e)], b = t[std::size_t((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      half.emplace_back(a, b, int(f));
    }
  }
  std::sort(half.begin(), half.end());
  std::vector<EdgeFaces> out;
  for (std::size_t i = 0; i < half.size();) {
    EdgeFaces ef;
    ef.a = std::get<0>(half[i]);
    ef.b = std::get<1>(half[i]);
    while (i < half.size() && std::get<0>(half[i]) == ef.a && std::get<1>(half[i]) == ef.b) {
      ef.faces.push_back(std::get<2>(half[i]));
      ++i;
    }
    out.push_back(std::move(ef));
  }
  return out;
}

std::vector<bool> boundary_vertices(const TriangleMesh& mesh) {
  std::vector<bool> b(mesh.vertices.size(), false);
  for (const EdgeFaces& e : edge_faces(mesh))
    if (e.faces.size() == 1) b[std::size_t(e.a)] = b[std::size_t(e.b)] = true;
  return b;
}

std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.vertices.size());
  for (const Face& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      const int a = f[std::size_t(e)], b = f[std::size_t((e + 1) % 3)];
      adj[std::size_t(a)].push_back(b);
      adj[std::size_t(b)].push_back(a);
    }
  for (auto& n : adj) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

std::vector<int> face_components(const TriangleMesh& mesh, int* count) {
  UnionFind uf(mesh.faces.size());
  for (const EdgeFaces& e : edge_faces(mesh))
    for (std::size_t i = 1; i < e.faces.size(); ++i) uf.unite(e.faces[0], e.faces[i]);
  std::vector<int> id(mesh.faces.size(), -1), root_id(mesh.faces.size(), -1);
  int next = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const int r = uf.find(int(f));
    if (root_id[std::size_t(r)] < 0) root_id[std::size_t(r)] = next++;
    id[f] = root_id[std::size_t(r)];
  }
  if (count) *count = next;
  return id;
}

std::vector<int> vertex_components(const TriangleMesh& mesh, int* count) {
  UnionFind uf(mesh.vertices.size());
  for (const Face& f : mesh.faces) {
    uf.unite(f[0], f[1]);
    uf.unite(f[1], f[2]);
  }
  std::vector<int> id(mesh.vertices.size(), -1), root_id(mesh.vertices.size(), -1);
  int next = 0;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const int r = uf.find(int(v));
    if (root_id[std::size_t(r)] < 0) root_id[std::size_t(r)] = next++;
    id[v] = root_id[std::size_t(r)];
  }
  if (count) *count = next;
  return id;
}

TriangleMesh extract_faces(const TriangleMesh& mesh, const std::vector<int>& faces) {
  std::vector<bool> keep(mesh.vertices.size(), false);
  for (int f : faces)
    for (int v : mesh.faces[std::size_t(f)]) keep[std::size_t(v)] = true;
  TriangleMesh out;
  const auto remap = compact_vertices(mesh, keep, out);
  out.faces.reserve(faces.size());
  for (int f : faces) {
    const Face& t = mesh.faces[std::size_t(f)];
    out.faces.push_back({remap[std::size_t(t[0])], remap[std::size_t(t[1])], remap[std::size_t(t[2])]});
  }
  return out;
}

std::vector<TriangleMesh> split_components(const TriangleMesh& mesh) {
  int count = 0;
  const auto comp = face_components(mesh, &count);
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(count));
  for (std::size_t f = 0; f < comp.size(); ++f) groups[std::size_t(comp[f])].push_back(int(f));
  std::vector<TriangleMesh> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(extract_faces(mesh, g));
  return out;
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  std::set<std::string> names;
  bool all_normals = !parts.empty();
  for (const auto& p : parts) {
    for (const auto& [name, _] : p.channels) names.insert(name);
    all_normals = all_normals && (p.has_normals() || p.vertices.empty());
  }
  for (const auto& p : parts) {
    const int offset = int(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    if (all_normals) out.normals.insert(out.normals.end(), p.normals.begin(), p.normals.end());
    for (const Face& f : p.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    for (const auto& name : names) {
      auto& dst = out.channels[name];
      auto it = p.channels.find(name);
      if (it != p.channels.end()) dst.insert(dst.end(), it->second.begin(), it->second.end());
      else dst.insert(dst.end(), p.vertices.size(), std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

Vec3 face_normal(const TriangleMesh& mesh, int f) {
  const Face& t = mesh.faces[std::size_t(f)];
  const Vec3 n = (mesh.vertices[std::size_t(t[1])] - mesh.vertices[std::size_t(t[0])])
                     .cross(mesh.vertices[std::size_t(t[2])] - mesh.vertices[std::size_t(t[0])]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

std::vector<Vec3> compute_vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> n(mesh.vertices.size(), Vec3::Zero());
  for (const Face& f : mesh.faces) {
    const Vec3 a = mesh.vertices[std::size_t(f[0])], b = mesh.vertices[std::size_t(f[1])],
               c = mesh.vertices[std::size_t(f[2])];
    const Vec3 w = (b - a).cross(c - a);  // length = 2 * area
    for (int v : f) n[std::size_t(v)] += w;
  }
  for (auto& v : n) {
    const double len = v.norm();
    v = len > 0.0 ? Vec3(v / len) : Vec3(0.0, 0.0, 1.0);
  }
  return n;
}

double surface_area(const TriangleMesh& mesh) {
  double a = 0.0;
  for (const Face& f : mesh.faces)
    a += triangle_area(mesh.vertices[std::size_t(f[0])], mesh.vertices[std::size_t(f[1])],
                       mesh.vertices[std::size_t(f[2])]);
  return a;
}

int euler_characteristic(const TriangleMesh& mesh) {
  std::vector<bool> used(mesh.vertices.size(), false);
  for (const Face& f : mesh.faces)
    for (int v : f) used[std::size_t(v)] = true;
  const int v = int(std::count(used.begin(), used.end(), true));
  return v - int(edge_faces(mesh).size()) + int(mesh.faces.size());
}

TriangleMesh mesh_cleanup(const TriangleMesh& mesh, CleanupStats* stats) {
  mesh.validate();
  CleanupStats st;
  std::vector<int> kept;
  kept.reserve(mesh.faces.size());

  std::set<std::tuple<int, int, int>> seen;
  std::map<std::pair<int, int>, int> edge_use;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      ++st.degenerate_faces;
      continue;
    }
    const Vec3& a = mesh.vertices[std::size_t(t[0])];
    const Vec3& b = mesh.vertices[std::size_t(t[1])];
    const Vec3& c = mesh.vertices[std::size_t(t[2])];
    const double longest = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
    if (!(triangle_area(a, b, c) > 1e-12 * longest)) {
      ++st.degenerate_faces;
      continue;
    }
    if (!seen.insert(sorted_key(t)).second) {
      ++st.duplicate_faces;
      continue;
    }
    bool manifold = true;
    for (int e = 0; e < 3; ++e) {
      auto key = std::minmax(t[std::size_t(e)], t[std::size_t((e + 1) % 3)]);
      auto it = edge_use.find(key);
      if (it != edge_use.end() && it->second >= 2) manifold = false;
    }
    if (!manifold) {
      ++st.nonmanifold_faces;
      continue;
    }
    for (int e = 0; e < 3; ++e) ++edge_use[std::minmax(t[std::size_t(e)], t[std::size_t((e + 1) % 3)])];
    kept.push_back(int(f));
  }

  std::vector<bool> keep(mesh.vertices.size(), false);
  for (int f : kept)
    for (int v : mesh.faces[std::size_t(f)]) keep[std::size_t(v)] = true;
  st.unreferenced_vertices = int(std::count(keep.begin(), keep.end(), false));

  TriangleMesh out;
  const auto remap = compact_vertices(mesh, keep, out);
  for (int f : kept) {
    const Face& t = mesh.faces[std::size_t(f)];
    out.faces.push_back({remap[std::size_t(t[0])], remap[std::size_t(t[1])], remap[std::size_t(t[2])]});
  }
  if (stats) *stats = st;
  return out;
}

TriangleMesh remove_vertices(const TriangleMesh& mesh, const std::vector<bool>& remove) {
  std::vector<int> faces;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    if (!remove[std::size_t(t[0])] && !remove[std::size_t(t[1])] && !remove[std::size_t(t[2])])
      faces.push_back(int(f));
  }
  return extract_faces(mesh, faces);
}

std::vector<double> vertex_to_face_average(const TriangleMesh& mesh, const std::vector<double>& values) {
  std::vector<double> out(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    out[f] = (values[std::size_t(t[0])] + values[std::size_t(t[1])] + values[std::size_t(t[2])]) / 3.0;
  }
  return out;
}

}  // namespace surfora
