#include "surfora/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace surfora {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

}  // namespace

KdTree::KdTree(const std::vector<Vec3>& points, int leaf_size)
    : points_(points), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / std::size_t(leaf_size_) + 2);
    build(0, int(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[std::size_t(order_[std::size_t(i)])]);
    node.hi = node.hi.cwiseMax(points_[std::size_t(order_[std::size_t(i)])]);
  }
  const int id = int(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double pa = points_[std::size_t(a)][axis], pb = points_[std::size_t(b)][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[std::size_t(id)].left = l;
  nodes_[std::size_t(id)].right = r;
  return id;
}

double KdTree::box_dist2(const Node& n, const Vec3& q) {
  const Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, int k, int skip) const {
  std::vector<Neighbor> heap;  // max-heap by `closer`
  if (k <= 0 || nodes_.empty()) return heap;
  heap.reserve(std::size_t(k) + 1);
  auto worst = [&]() {
    return int(heap.size()) < k ? std::numeric_limits<double>::infinity() : heap.front().dist2;
  };
  // Explicit stack, nearer child first.
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& n = nodes_[std::size_t(ni)];
    if (box_dist2(n, q) > worst()) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[std::size_t(i)];
        if (idx == skip) continue;
        const Neighbor c{idx, (points_[std::size_t(idx)] - q).squaredNorm()};
        if (int(heap.size()) < k) {
          heap.push_back(c);
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(c, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = c;
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
      continue;
    }
    const double dl = box_dist2(nodes_[std::size_t(n.left)], q);
    const double dr = box_dist2(nodes_[std::size_t(n.right)], q);
    if (dl <= dr) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  std::sort(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<Neighbor> KdTree::radius(const Vec3& q, double r) const {
  std::vector<Neighbor> out;
  if (nodes_.empty() || r < 0.0) return out;
  const double r2 = r * r;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[std::size_t(stack.back())];
    stack.pop_back();
    if (box_dist2(n, q) > r2) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[std::size_t(i)];
        const double d2 = (points_[std::size_t(idx)] - q).squaredNorm();
        if (d2 <= r2) out.push_back({idx, d2});
      }
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  std::sort(out.begin(), out.end(), closer);
  return out;
}

Neighbor KdTree::nearest(const Vec3& q, int skip) const {
  const auto r = knn(q, 1, skip);
  return r.empty() ? Neighbor{-1, std::numeric_limits<double>::infinity()} : r.front();
}

std::vector<double> nearest_neighbor_distances(const KdTree& tree) {
  std::vector<double> d(tree.size(), 0.0);
  const int n = int(tree.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) d[std::size_t(i)] = std::sqrt(tree.nearest(tree.points()[std::size_t(i)], i).dist2);
  return d;
}

double mean_knn_distance(const KdTree& tree, int k) {
  const int n = int(tree.size());
  if (n < 2) return 0.0;
  std::vector<double> d(std::size_t(n), 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto nb = tree.knn(tree.points()[std::size_t(i)], k, i);
    d[std::size_t(i)] = nb.empty() ? 0.0 : std::sqrt(nb.back().dist2);
  }
  double s = 0.0;
  for (double v : d) s += v;
  return s / n;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t m = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + std::ptrdiff_t(m), values.end());
  double v = values[m];
  if (values.size() % 2 == 0) v = 0.5 * (v + *std::max_element(values.begin(), values.begin() + std::ptrdiff_t(m)));
  return v;
}

}  // namespace surfora
