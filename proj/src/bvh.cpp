#include "surfora/bvh.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace surfora {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = va + vb + vc;
  if (!(denom != 0.0)) {
    // degenerate triangle: best of the three edges
    Vec3 best = a;
    double bd = (p - a).squaredNorm();
    const Vec3 ends[3][2] = {{a, b}, {b, c}, {c, a}};
    for (const auto& e : ends) {
      const Vec3 d = e[1] - e[0];
      const double l2 = d.squaredNorm();
      const double t = l2 > 0.0 ? std::clamp((p - e[0]).dot(d) / l2, 0.0, 1.0) : 0.0;
      const Vec3 q = e[0] + t * d;
      if ((p - q).squaredNorm() < bd) {
        bd = (p - q).squaredNorm();
        best = q;
      }
    }
    return best;
  }
  const double v = vb / denom, w = vc / denom;
  return a + ab * v + ac * w;
}

TriangleBvh::TriangleBvh(const TriangleMesh& mesh, int leaf_size) : mesh_(mesh), leaf_size_(std::max(1, leaf_size)) {
  mesh.validate();
  const int nf = int(mesh.num_faces());
  order_.resize(std::size_t(nf));
  centroid_.resize(std::size_t(nf));
  for (int f = 0; f < nf; ++f) {
    order_[std::size_t(f)] = f;
    const Face& t = mesh.faces[std::size_t(f)];
    centroid_[std::size_t(f)] =
        (mesh.vertices[std::size_t(t[0])] + mesh.vertices[std::size_t(t[1])] + mesh.vertices[std::size_t(t[2])]) / 3.0;
  }
  if (nf > 0) build(0, nf);
}

int TriangleBvh::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i)
    for (int v : mesh_.faces[std::size_t(order_[std::size_t(i)])]) {
      node.lo = node.lo.cwiseMin(mesh_.vertices[std::size_t(v)]);
      node.hi = node.hi.cwiseMax(mesh_.vertices[std::size_t(v)]);
    }
  const int id = int(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;
  Vec3 clo = Vec3::Constant(std::numeric_limits<double>::infinity()), chi = -clo;
  for (int i = begin; i < end; ++i) {
    clo = clo.cwiseMin(centroid_[std::size_t(order_[std::size_t(i)])]);
    chi = chi.cwiseMax(centroid_[std::size_t(order_[std::size_t(i)])]);
  }
  int axis;
  (chi - clo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int x, int y) {
    const double cx = centroid_[std::size_t(x)][axis], cy = centroid_[std::size_t(y)][axis];
    return cx != cy ? cx < cy : x < y;
  });
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[std::size_t(id)].left = l;
  nodes_[std::size_t(id)].right = r;
  return id;
}

namespace {
double box_dist2(const Vec3& lo, const Vec3& hi, const Vec3& p) {
  const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  return d.squaredNorm();
}
}  // namespace

ClosestHit TriangleBvh::closest(const Vec3& p) const {
  if (nodes_.empty()) throw std::invalid_argument("closest point query on an empty mesh");
  ClosestHit best;
  best.dist2 = std::numeric_limits<double>::infinity();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[std::size_t(stack.back())];
    stack.pop_back();
    if (box_dist2(n.lo, n.hi, p) > best.dist2) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int f = order_[std::size_t(i)];
        const Face& t = mesh_.faces[std::size_t(f)];
        const Vec3 q = closest_point_on_triangle(p, mesh_.vertices[std::size_t(t[0])], mesh_.vertices[std::size_t(t[1])],
                                                 mesh_.vertices[std::size_t(t[2])]);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best.dist2 || (d2 == best.dist2 && f < best.face)) {
          best.dist2 = d2;
          best.face = f;
          best.point = q;
        }
      }
      continue;
    }
    const Node& l = nodes_[std::size_t(n.left)];
    const Node& r = nodes_[std::size_t(n.right)];
    const double dl = box_dist2(l.lo, l.hi, p), dr = box_dist2(r.lo, r.hi, p);
    if (dl <= dr) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  return best;
}

std::vector<int> TriangleBvh::overlapping(const Vec3& lo, const Vec3& hi) const {
  std::vector<int> out;
  if (nodes_.empty()) return out;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[std::size_t(stack.back())];
    stack.pop_back();
    if ((n.lo.array() > hi.array()).any() || (n.hi.array() < lo.array()).any()) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) out.push_back(order_[std::size_t(i)]);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace surfora
