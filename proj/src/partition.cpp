#include "surfora/partition.hpp"

#include "surfora/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace surfora {

std::string to_string(PartitionMethod m) {
  return m == PartitionMethod::Connectivity ? "connectivity" : "proxy-split";
}

std::vector<double> proxy_side(const std::vector<Vec3>& points, const TriangleMesh& proxy) {
  if (proxy.faces.empty()) throw std::invalid_argument("proxy mesh is empty");
  const std::vector<Vec3> pn = proxy.has_normals() ? proxy.normals : compute_vertex_normals(proxy);
  const TriangleBvh bvh(proxy);
  const int n = int(points.size());
  std::vector<double> side(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 256)
  for (int i = 0; i < n; ++i) {
    const Vec3& p = points[std::size_t(i)];
    const ClosestHit hit = bvh.closest(p);
    const Face& t = proxy.faces[std::size_t(hit.face)];
    const Vec3 &a = proxy.vertices[std::size_t(t[0])], &b = proxy.vertices[std::size_t(t[1])],
               &c = proxy.vertices[std::size_t(t[2])];
    // barycentric coordinates of the closest point
    const Vec3 v0 = b - a, v1 = c - a, v2 = hit.point - a;
    const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1), d20 = v2.dot(v0), d21 = v2.dot(v1);
    const double den = d00 * d11 - d01 * d01;
    Vec3 nq;
    if (den > 0.0) {
      const double w1 = (d11 * d20 - d01 * d21) / den, w2 = (d00 * d21 - d01 * d20) / den;
      nq = (1.0 - w1 - w2) * pn[std::size_t(t[0])] + w1 * pn[std::size_t(t[1])] + w2 * pn[std::size_t(t[2])];
    } else {
      nq = pn[std::size_t(t[0])] + pn[std::size_t(t[1])] + pn[std::size_t(t[2])];
    }
    if (!(nq.squaredNorm() > 0.0)) nq = face_normal(proxy, hit.face);
    side[std::size_t(i)] = (p - hit.point).dot(nq.normalized());
  }
  return side;
}

namespace {

void label(TriangleMesh& m, double value) { m.channels["leaflet"].assign(m.num_vertices(), value); }

}  // namespace

LeafletPair split_isosurface(const TriangleMesh& iso, const TriangleMesh& proxy, const ScalarField* sdf) {
  iso.validate();
  proxy.validate();
  if (iso.faces.empty()) throw std::invalid_argument("isosurface mesh is empty");
  if (sdf) {
    const GridGeometry& g = sdf->grid;
    const Vec3 lo = g.origin - g.spacing, hi = g.world(g.dims - Vec3i::Ones()) + g.spacing;
    for (const Vec3& p : iso.vertices)
      if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any())
        throw std::invalid_argument("split_isosurface: isosurface and field frames differ");
  }
  const std::vector<double> side = proxy_side(iso.vertices, proxy);

  LeafletPair out;
  int ncomp = 0;
  const std::vector<int> comp = face_components(iso, &ncomp);

  if (ncomp == 2) {
    out.method = PartitionMethod::Connectivity;
    std::vector<double> sum(2, 0.0);
    std::vector<int> cnt(2, 0);
    std::vector<std::vector<int>> faces(2);
    for (std::size_t f = 0; f < iso.num_faces(); ++f) {
      const int c = comp[f];
      faces[std::size_t(c)].push_back(int(f));
      for (int v : iso.faces[f]) {
        sum[std::size_t(c)] += side[std::size_t(v)];
        ++cnt[std::size_t(c)];
      }
    }
    const int inner = sum[0] / cnt[0] <= sum[1] / cnt[1] ? 0 : 1;
    out.inner = extract_faces(iso, faces[std::size_t(inner)]);
    out.outer = extract_faces(iso, faces[std::size_t(1 - inner)]);
    out.inner_components = out.outer_components = 1;
    label(out.inner, 1.0);
    label(out.outer, 2.0);
    return out;
  }

  out.method = PartitionMethod::ProxySplit;
  double scale = 0.0;
  for (const Vec3& p : iso.vertices) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * std::max(scale, 1.0);
  auto sgn = [&](int v) {
    const double s = side[std::size_t(v)];
    return s > tol ? 1 : (s < -tol ? -1 : 0);
  };

  // Working mesh: iso vertices plus cut points shared between neighbouring faces.
  TriangleMesh work;
  work.vertices = iso.vertices;
  if (iso.has_normals()) work.normals = iso.normals;
  std::vector<double> cut_flag(iso.num_vertices(), 0.0);
  std::map<std::pair<int, int>, int> cut_vertex;
  auto edge_point = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = cut_vertex.find(key);
    if (it != cut_vertex.end()) return it->second;
    const double sa = side[std::size_t(a)], sb = side[std::size_t(b)];
    const double t = sa / (sa - sb);
    const int id = int(work.vertices.size());
    work.vertices.push_back(work.vertices[std::size_t(a)] + t * (work.vertices[std::size_t(b)] - work.vertices[std::size_t(a)]));
    if (work.has_normals()) {
      Vec3 nn = (1.0 - t) * work.normals[std::size_t(a)] + t * work.normals[std::size_t(b)];
      work.normals.push_back(nn.squaredNorm() > 0.0 ? nn.normalized() : work.normals[std::size_t(a)]);
    }
    cut_flag.push_back(1.0);
    cut_vertex.emplace(key, id);
    return id;
  };

  std::vector<Face> inner_faces, outer_faces;
  for (std::size_t f = 0; f < iso.num_faces(); ++f) {
    const Face& t = iso.faces[f];
    int pos = 0, neg = 0;
    for (int v : t) {
      pos += sgn(v) > 0;
      neg += sgn(v) < 0;
    }
    if (pos == 0 && neg == 0) {
      const double m = side[std::size_t(t[0])] + side[std::size_t(t[1])] + side[std::size_t(t[2])];
      (m < 0.0 ? inner_faces : outer_faces).push_back(t);
      ++out.ambiguous_faces;
      continue;
    }
    if (neg == 0) {
      outer_faces.push_back(t);
      continue;
    }
    if (pos == 0) {
      inner_faces.push_back(t);
      continue;
    }
    ++out.cut_faces;
    // rotate so that t[0] is the vertex alone on its side (or the zero vertex)
    int r = 0;
    for (int k = 0; k < 3; ++k) {
      const int s0 = sgn(t[std::size_t(k)]), s1 = sgn(t[std::size_t((k + 1) % 3)]), s2 = sgn(t[std::size_t((k + 2) % 3)]);
      if (s0 == 0 || (s0 != s1 && s0 != s2 && s1 == s2)) {
        r = k;
        break;
      }
    }
    const int a = t[std::size_t(r)], b = t[std::size_t((r + 1) % 3)], c = t[std::size_t((r + 2) % 3)];
    if (sgn(a) == 0) {
      const int m = edge_point(b, c);
      Face fb{a, b, m}, fc{a, m, c};
      (sgn(b) < 0 ? inner_faces : outer_faces).push_back(fb);
      (sgn(c) < 0 ? inner_faces : outer_faces).push_back(fc);
      out.cut_length_nm += (work.vertices[std::size_t(m)] - work.vertices[std::size_t(a)]).norm();
      continue;
    }
    const int mab = edge_point(a, b), mca = edge_point(c, a);
    auto& lone = sgn(a) < 0 ? inner_faces : outer_faces;
    auto& pair = sgn(a) < 0 ? outer_faces : inner_faces;
    lone.push_back({a, mab, mca});
    pair.push_back({mab, b, c});
    pair.push_back({mab, c, mca});
    out.cut_length_nm += (work.vertices[std::size_t(mab)] - work.vertices[std::size_t(mca)]).norm();
  }

  const bool any_inner = !inner_faces.empty(), any_outer = !outer_faces.empty();
  if (out.cut_faces == 0 && (ncomp == 1 || !any_inner || !any_outer))
    throw std::runtime_error("cannot partition: no intersection curve");

  for (const auto& [name, vals] : iso.channels) {
    auto& dst = work.channels[name];
    dst = vals;
    dst.resize(work.vertices.size());
    for (const auto& [key, id] : cut_vertex) {
      const double sa = side[std::size_t(key.first)], sb = side[std::size_t(key.second)];
      const double t = sa / (sa - sb);
      dst[std::size_t(id)] = (1.0 - t) * vals[std::size_t(key.first)] + t * vals[std::size_t(key.second)];
    }
  }
  work.channels["cut"] = cut_flag;

  const std::size_t n_inner = inner_faces.size();
  work.faces = inner_faces;
  work.faces.insert(work.faces.end(), outer_faces.begin(), outer_faces.end());
  std::vector<int> fi(n_inner), fo(outer_faces.size());
  for (std::size_t i = 0; i < fi.size(); ++i) fi[i] = int(i);
  for (std::size_t i = 0; i < fo.size(); ++i) fo[i] = int(n_inner + i);
  out.inner = extract_faces(work, fi);
  out.outer = extract_faces(work, fo);
  face_components(out.inner, &out.inner_components);
  face_components(out.outer, &out.outer_components);
  if (out.inner.faces.empty()) out.inner_components = 0;
  if (out.outer.faces.empty()) out.outer_components = 0;
  label(out.inner, 1.0);
  label(out.outer, 2.0);
  return out;
}

}  // namespace surfora
