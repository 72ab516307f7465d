#include "surfora/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace surfora {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct EnvelopeScratch {
  std::vector<double> line, xs, fs, z, out;
  std::vector<int> v;
};

// Lower envelope of parabolas (x - xs)^2 + fs sampled at x = q * h.
void envelope_1d(EnvelopeScratch& s, int n, double h, bool border) {
  s.xs.clear();
  s.fs.clear();
  if (border) {
    s.xs.push_back(-h);
    s.fs.push_back(0.0);
  }
  for (int q = 0; q < n; ++q) {
    if (s.line[q] < kInf) {
      s.xs.push_back(q * h);
      s.fs.push_back(s.line[q]);
    }
  }
  if (border) {
    s.xs.push_back(n * h);
    s.fs.push_back(0.0);
  }
  s.out.assign(std::size_t(n), kInf);
  const int m = int(s.xs.size());
  if (m == 0) return;

  s.v.assign(std::size_t(m), 0);
  s.z.assign(std::size_t(m) + 1, 0.0);
  int k = 0;
  s.v[0] = 0;
  s.z[0] = -kInf;
  s.z[1] = kInf;
  for (int q = 1; q < m; ++q) {
    double sx = 0.0;
    while (true) {
      const int p = s.v[std::size_t(k)];
      sx = ((s.fs[q] + s.xs[q] * s.xs[q]) - (s.fs[p] + s.xs[p] * s.xs[p])) /
           (2.0 * (s.xs[q] - s.xs[p]));
      if (sx > s.z[std::size_t(k)]) break;
      --k;  // z[0] = -inf stops this at k = 0
    }
    ++k;
    s.v[std::size_t(k)] = q;
    s.z[std::size_t(k)] = sx;
    s.z[std::size_t(k) + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    const double x = q * h;
    while (s.z[std::size_t(k) + 1] < x) ++k;
    const int p = s.v[std::size_t(k)];
    const double dx = x - s.xs[p];
    s.out[std::size_t(q)] = dx * dx + s.fs[p];
  }
}

void transform_axis(const GridGeometry& g, std::vector<double>& d, int axis, bool border) {
  const int n = g.dims[axis];
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  const int n1 = g.dims[a1], n2 = g.dims[a2];
  Index stride = 1;
  for (int a = 0; a < axis; ++a) stride *= g.dims[a];
  const double h = g.spacing[axis];
  const Index lines = Index(n1) * n2;

#pragma omp parallel
  {
    EnvelopeScratch s;
    s.line.resize(std::size_t(n));
#pragma omp for schedule(static)
    for (Index l = 0; l < lines; ++l) {
      Vec3i ijk;
      ijk[axis] = 0;
      ijk[a1] = int(l % n1);
      ijk[a2] = int(l / n1);
      const Index base = g.linear(ijk);
      for (int q = 0; q < n; ++q) s.line[std::size_t(q)] = d[std::size_t(base + q * stride)];
      envelope_1d(s, n, h, border);
      for (int q = 0; q < n; ++q) d[std::size_t(base + q * stride)] = s.out[std::size_t(q)];
    }
  }
}

std::vector<std::uint8_t> foreground_sites(const VoxelGrid& m, bool background) {
  std::vector<std::uint8_t> s(m.labels.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = ((m.labels[i] != 0) != background) ? 1 : 0;
  return s;
}

void require_binary(const VoxelGrid& mask, const char* what) {
  mask.validate();
  if (!mask.is_binary()) throw std::invalid_argument(std::string(what) + ": mask must be binary");
}

}  // namespace

std::vector<double> squared_distance_to_sites(const GridGeometry& grid,
                                              const std::vector<std::uint8_t>& sites,
                                              bool border_sites) {
  grid.validate();
  if (Index(sites.size()) != grid.size()) throw std::invalid_argument("site array size mismatch");
  std::vector<double> d(sites.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = sites[i] ? 0.0 : kInf;
  for (int axis = 0; axis < 3; ++axis) transform_axis(grid, d, axis, border_sites);
  return d;
}

ScalarField euclidean_distance_transform(const VoxelGrid& mask) {
  mask.validate();
  const auto d2 = squared_distance_to_sites(mask.grid, foreground_sites(mask, true), true);
  ScalarField out(mask.grid, 0.0);
  for (std::size_t i = 0; i < d2.size(); ++i) out.values[i] = mask.labels[i] != 0 ? std::sqrt(d2[i]) : 0.0;
  return out;
}

ScalarField distance_to_foreground(const VoxelGrid& mask) {
  mask.validate();
  const auto d2 = squared_distance_to_sites(mask.grid, foreground_sites(mask, false), false);
  ScalarField out(mask.grid, 0.0);
  for (std::size_t i = 0; i < d2.size(); ++i) out.values[i] = std::sqrt(d2[i]);
  return out;
}

VoxelGrid binary_dilate(const VoxelGrid& mask, int radius_vox) {
  mask.validate();
  if (radius_vox < 0) throw std::invalid_argument("negative structuring element radius");
  const double r = radius_vox * mask.grid.min_spacing();
  const double r2 = r * r * (1.0 + 1e-12);
  const auto d2 = squared_distance_to_sites(mask.grid, foreground_sites(mask, false), false);
  VoxelGrid out(mask.grid);
  for (std::size_t i = 0; i < d2.size(); ++i) out.labels[i] = d2[i] <= r2 ? 1u : 0u;
  return out;
}

VoxelGrid binary_erode(const VoxelGrid& mask, int radius_vox) {
  mask.validate();
  if (radius_vox < 0) throw std::invalid_argument("negative structuring element radius");
  const double r = radius_vox * mask.grid.min_spacing();
  const double r2 = r * r * (1.0 + 1e-12);
  const auto d2 = squared_distance_to_sites(mask.grid, foreground_sites(mask, true), false);
  VoxelGrid out(mask.grid);
  for (std::size_t i = 0; i < d2.size(); ++i)
    out.labels[i] = (mask.labels[i] != 0 && d2[i] > r2) ? 1u : 0u;
  return out;
}

VoxelGrid binary_open_close(const VoxelGrid& mask, int radius_vox) {
  require_binary(mask, "binary_open_close");
  if (radius_vox < 1) throw std::invalid_argument("structuring element radius must be >= 1");
  if (2 * radius_vox >= mask.grid.dims.minCoeff())
    throw std::invalid_argument("structuring element exceeds volume");
  VoxelGrid opened = binary_dilate(binary_erode(mask, radius_vox), radius_vox);
  return binary_erode(binary_dilate(opened, radius_vox), radius_vox);
}

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::Face;
    case 18: return Connectivity::Edge;
    case 26: return Connectivity::Vertex;
    default: throw std::invalid_argument("connectivity must be 6, 18 or 26");
  }
}

std::vector<Vec3i> neighbourhood(Connectivity c) {
  std::vector<Vec3i> out;
  const int limit = c == Connectivity::Face ? 1 : c == Connectivity::Edge ? 2 : 3;
  for (int dk = -1; dk <= 1; ++dk)
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int nz = std::abs(di) + std::abs(dj) + std::abs(dk);
        if (nz > 0 && nz <= limit) out.emplace_back(di, dj, dk);
      }
  return out;
}

LabelMask connected_components(const VoxelGrid& mask, Connectivity connectivity) {
  mask.validate();
  const GridGeometry& g = mask.grid;
  const auto offsets = neighbourhood(connectivity);
  LabelMask out(g);
  std::vector<Index> stack;
  std::uint32_t next = 0;
  for (Index idx = 0; idx < g.size(); ++idx) {
    if (mask.labels[std::size_t(idx)] == 0 || out.labels[std::size_t(idx)] != 0) continue;
    ++next;
    out.labels[std::size_t(idx)] = next;
    stack.assign(1, idx);
    while (!stack.empty()) {
      const Index cur = stack.back();
      stack.pop_back();
      const Vec3i c = g.unravel(cur);
      for (const Vec3i& o : offsets) {
        const Vec3i nb = c + o;
        if (!g.contains(nb)) continue;
        const Index ni = g.linear(nb);
        if (mask.labels[std::size_t(ni)] != 0 && out.labels[std::size_t(ni)] == 0) {
          out.labels[std::size_t(ni)] = next;
          stack.push_back(ni);
        }
      }
    }
  }
  return out;
}

LabelMask relabel_sequential(const LabelMask& labels) {
  LabelMask out(labels.grid);
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const std::uint32_t l = labels.labels[i];
    if (l == 0) continue;
    auto [it, inserted] = remap.try_emplace(l, next + 1);
    if (inserted) ++next;
    out.labels[i] = it->second;
  }
  return out;
}

WatershedResult watershed_split(const VoxelGrid& mask, const WatershedParams& params) {
  require_binary(mask, "watershed_split");
  const GridGeometry& g = mask.grid;
  WatershedResult result;
  LabelMask components = connected_components(mask, params.connectivity);
  const ScalarField edt = euclidean_distance_transform(mask);

  // Local maxima of the distance map (non-strict, 26-neighbourhood).
  const auto around = neighbourhood(Connectivity::Vertex);
  std::vector<Index> candidates;
  for (Index idx = 0; idx < g.size(); ++idx) {
    const double v = edt.values[std::size_t(idx)];
    if (v <= 0.0) continue;
    const Vec3i c = g.unravel(idx);
    bool is_max = true;
    for (const Vec3i& o : around) {
      const Vec3i nb = c + o;
      if (g.contains(nb) && edt.values[std::size_t(g.linear(nb))] > v) {
        is_max = false;
        break;
      }
    }
    if (is_max) candidates.push_back(idx);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
    return edt.values[std::size_t(a)] > edt.values[std::size_t(b)];
  });

  const double min_d2 = params.min_seed_dist_nm * params.min_seed_dist_nm;
  std::vector<Index> seeds;
  for (Index c : candidates) {
    const Vec3 pc = g.world(g.unravel(c));
    const std::uint32_t comp = components.labels[std::size_t(c)];
    bool ok = true;
    for (Index s : seeds) {
      if (components.labels[std::size_t(s)] != comp) continue;
      if ((g.world(g.unravel(s)) - pc).squaredNorm() < min_d2) {
        ok = false;
        break;
      }
    }
    if (ok) seeds.push_back(c);
  }
  result.num_seeds = int(seeds.size());
  if (seeds.empty()) {
    result.labels = std::move(components);
    result.num_labels = int(result.labels.max_label());
    result.degenerate = true;
    return result;
  }

  // Priority flood from the seeds, highest distance first, FIFO among ties.
  LabelMask flooded(g);
  using Entry = std::tuple<double, Index, Index>;  // (edt, -order, voxel)
  std::priority_queue<Entry> queue;
  Index order = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    flooded.labels[std::size_t(seeds[s])] = std::uint32_t(s + 1);
    queue.emplace(edt.values[std::size_t(seeds[s])], -order++, seeds[s]);
  }
  const auto offsets = neighbourhood(params.connectivity);
  while (!queue.empty()) {
    const auto [v, neg_order, cur] = queue.top();
    queue.pop();
    const std::uint32_t lab = flooded.labels[std::size_t(cur)];
    const Vec3i c = g.unravel(cur);
    for (const Vec3i& o : offsets) {
      const Vec3i nb = c + o;
      if (!g.contains(nb)) continue;
      const Index ni = g.linear(nb);
      if (mask.labels[std::size_t(ni)] == 0 || flooded.labels[std::size_t(ni)] != 0) continue;
      flooded.labels[std::size_t(ni)] = lab;
      queue.emplace(edt.values[std::size_t(ni)], -order++, ni);
    }
  }
  result.labels = relabel_sequential(flooded);
  result.num_labels = int(result.labels.max_label());
  return result;
}

OverlapScores dice_iou(const VoxelGrid& a, const VoxelGrid& b) {
  a.validate();
  b.validate();
  if (a.grid.dims != b.grid.dims) throw std::invalid_argument("dice_iou: dims mismatch");
  Index na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const bool fa = a.labels[i] != 0, fb = b.labels[i] != 0;
    na += fa;
    nb += fb;
    inter += fa && fb;
  }
  OverlapScores s;
  if (na + nb == 0) {
    s.dice = s.iou = 1.0;
    s.both_empty = true;
    return s;
  }
  s.dice = 2.0 * double(inter) / double(na + nb);
  s.iou = double(inter) / double(na + nb - inter);
  return s;
}

LabelMask restrict_to_roi(const VoxelGrid& segmentation, const LabelMask& rois) {
  segmentation.validate();
  rois.validate();
  if (segmentation.grid.dims != rois.grid.dims) throw std::invalid_argument("restrict_to_roi: dims mismatch");
  LabelMask out(segmentation.grid);
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    out.labels[i] = segmentation.labels[i] != 0 ? rois.labels[i] : 0u;
  return out;
}

}  // namespace surfora
