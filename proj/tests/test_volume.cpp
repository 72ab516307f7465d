#include "support.hpp"

#include "surfora/phantoms.hpp"
#include "surfora/volume.hpp"
#include "surfora/volume_io.hpp"

#include <doctest.h>

#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>

using namespace surfora;
using namespace surfora::testing;

namespace {

// Union-find labelling used as the reference for connected_components.
std::vector<int> reference_components(const VoxelGrid& m, int conn) {
  const GridGeometry& g = m.grid;
  std::vector<int> parent(std::size_t(g.size()));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[std::size_t(x)] == x ? x : parent[std::size_t(x)] = find(parent[std::size_t(x)]); };
  for (Index i = 0; i < g.size(); ++i) {
    if (!m.labels[std::size_t(i)]) continue;
    const Vec3i p = g.unravel(i);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
          if (order == 0 || (conn == 6 && order > 1) || (conn == 18 && order > 2)) continue;
          const Vec3i q = p + Vec3i(dx, dy, dz);
          if (!g.contains(q) || !m.labels[std::size_t(g.linear(q))]) continue;
          parent[std::size_t(find(int(i)))] = find(int(g.linear(q)));
        }
  }
  std::vector<int> root(parent.size(), -1);
  for (Index i = 0; i < g.size(); ++i)
    if (m.labels[std::size_t(i)]) root[std::size_t(i)] = find(int(i));
  return root;
}

}  // namespace

TEST_CASE("EDT matches exhaustive search on random masks") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 16);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec3i dims(dim(rng), dim(rng), dim(rng));
    const Vec3 spacing = trial % 3 == 0 ? Vec3(1.0, 1.5, 0.75) : Vec3::Ones();
    const VoxelGrid m = random_mask(rng, dims, 0.15 + 0.7 * (trial % 5) / 4.0, spacing);

    const ScalarField to_fg = distance_to_foreground(m);
    const auto ref_fg = brute_force_distance_to(m, true);
    for (std::size_t i = 0; i < ref_fg.size(); ++i) {
      if (std::isinf(ref_fg[i])) CHECK(std::isinf(to_fg.values[i]));
      else CHECK(to_fg.values[i] == doctest::Approx(ref_fg[i]).epsilon(1e-12));
    }

    // Interior EDT: the volume is padded with background, so distances are
    // capped by the distance to the padding layer.
    const ScalarField edt = euclidean_distance_transform(m);
    const auto ref_bg = brute_force_distance_to(m, false);
    const GridGeometry& g = m.grid;
    for (Index i = 0; i < g.size(); ++i) {
      if (!m.labels[std::size_t(i)]) {
        CHECK(edt.values[std::size_t(i)] == 0.0);
        continue;
      }
      const Vec3i p = g.unravel(i);
      double pad = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a)
        pad = std::min({pad, (p[a] + 1) * g.spacing[a], (g.dims[a] - p[a]) * g.spacing[a]});
      CHECK(edt.values[std::size_t(i)] == doctest::Approx(std::min(pad, ref_bg[std::size_t(i)])).epsilon(1e-12));
    }
  }
}

TEST_CASE("connected components agree with union-find for 6, 18 and 26 connectivity") {
  std::mt19937_64 rng(11);
  for (int conn : {6, 18, 26}) {
    for (int trial = 0; trial < 10; ++trial) {
      const VoxelGrid m = random_mask(rng, Vec3i(12, 10, 9), 0.3);
      const LabelMask lab = connected_components(m, connectivity_from_int(conn));
      const auto ref = reference_components(m, conn);
      std::map<int, std::uint32_t> fwd;
      std::map<std::uint32_t, int> bwd;
      std::uint32_t last_new = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (ref[i] < 0) {
          CHECK(lab.labels[i] == 0u);
          continue;
        }
        const std::uint32_t l = lab.labels[i];
        REQUIRE(l > 0u);
        auto [it, fresh] = fwd.emplace(ref[i], l);
        CHECK(it->second == l);
        auto [jt, fresh2] = bwd.emplace(l, ref[i]);
        CHECK(jt->second == ref[i]);
        // labels appear in order of their first voxel
        if (fresh) {
          CHECK(l == last_new + 1);
          last_new = l;
        }
        (void)fresh2;
      }
      CHECK(lab.max_label() == fwd.size());
    }
  }
}

TEST_CASE("dilation matches a brute-force ball scan") {
  std::mt19937_64 rng(3);
  const VoxelGrid m = random_mask(rng, Vec3i(14, 13, 12), 0.03);
  for (int r : {1, 2}) {
    const VoxelGrid d = binary_dilate(m, r);
    const GridGeometry& g = m.grid;
    for (Index i = 0; i < g.size(); ++i) {
      const Vec3i p = g.unravel(i);
      bool hit = false;
      for (Index j = 0; j < g.size() && !hit; ++j)
        if (m.labels[std::size_t(j)] && (g.unravel(j) - p).cast<double>().norm() <= r + 1e-9) hit = true;
      CHECK((d.labels[std::size_t(i)] != 0) == hit);
    }
  }
}

TEST_CASE("opening and closing are idempotent on a ball") {
  const GridGeometry g = phantom::cube_grid(32);
  const VoxelGrid b = phantom::ball(g, phantom::grid_center(g), 9.0);
  const VoxelGrid once = binary_open_close(b, 1);
  const VoxelGrid twice = binary_open_close(once, 1);
  CHECK(once.labels == twice.labels);
  CHECK(dice_iou(b, once).dice > 0.97);
}

TEST_CASE("dice and iou identities on random mask pairs") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const VoxelGrid a = random_mask(rng, Vec3i(8, 8, 8), 0.4), b = random_mask(rng, Vec3i(8, 8, 8), 0.4);
    const auto s = dice_iou(a, b);
    CHECK(s.dice == doctest::Approx(2.0 * s.iou / (1.0 + s.iou)).epsilon(1e-12));
    CHECK(s.iou <= s.dice);
    CHECK(s.dice >= 0.0);
    CHECK(s.dice <= 1.0);
  }
  GridGeometry g;
  g.dims = Vec3i(4, 1, 1);
  VoxelGrid a(g), b(g);
  a.labels = {1, 1, 0, 0};
  b.labels = {0, 1, 1, 0};
  const auto s = dice_iou(a, b);
  CHECK(s.dice == doctest::Approx(0.5));
  CHECK(s.iou == doctest::Approx(1.0 / 3.0));
  const auto e = dice_iou(VoxelGrid(g), VoxelGrid(g));
  CHECK(e.both_empty);
  CHECK(e.dice == 1.0);
}

TEST_CASE("watershed splits two overlapping balls at the neck plane") {
  const GridGeometry g = phantom::cube_grid(48);
  const Vec3 c = phantom::grid_center(g);
  VoxelGrid m = phantom::ball(g, c - Vec3(7.5, 0, 0), 12.0);
  const VoxelGrid o = phantom::ball(g, c + Vec3(7.5, 0, 0), 12.0);
  for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] |= o.labels[i];
  const auto ws = watershed_split(m, {});
  REQUIRE(ws.num_labels == 2);
  CHECK_FALSE(ws.degenerate);
  int misplaced = 0;
  for (Index i = 0; i < g.size(); ++i) {
    const std::uint32_t l = ws.labels.labels[std::size_t(i)];
    CHECK((l != 0) == (m.labels[std::size_t(i)] != 0));
    if (!l) continue;
    const double x = g.world(g.unravel(i)).x() - c.x();
    const std::uint32_t left = ws.labels.label_at(c - Vec3(7.5, 0, 0));
    if (std::abs(x) > 1.0 && ((x < 0) != (l == left))) ++misplaced;
  }
  CHECK(misplaced == 0);
}

TEST_CASE("relabel and ROI restriction") {
  GridGeometry g;
  g.dims = Vec3i(5, 1, 1);
  VoxelGrid l(g);
  l.labels = {0, 7, 7, 3, 0};
  const auto r = relabel_sequential(l);
  CHECK(r.labels == std::vector<std::uint32_t>{0, 1, 1, 2, 0});

  VoxelGrid seg(g), roi(g);
  seg.labels = {1, 1, 0, 1, 1};
  roi.labels = {2, 0, 2, 1, 1};
  CHECK(restrict_to_roi(seg, roi).labels == std::vector<std::uint32_t>{2, 0, 0, 1, 1});

  GridGeometry g2 = g;
  g2.dims = Vec3i(4, 1, 1);
  CHECK_THROWS_AS(restrict_to_roi(seg, VoxelGrid(g2)), std::invalid_argument);
}

TEST_CASE("volume files round-trip") {
  const auto dir = scratch_dir("volume_io");
  std::mt19937_64 rng(2);
  VoxelGrid m = random_mask(rng, Vec3i(9, 7, 5), 0.5, Vec3(1.5, 1.5, 1.5));
  m.grid.origin = Vec3(3.0, -6.0, 1.5);
  m.labels[3] = 300;  // forces 16-bit storage

  for (const char* name : {"a.mrc", "a.raw"}) {
    const std::string p = (dir / name).string();
    write_volume(p, m);
    const VoxelGrid back = read_volume(p);
    CHECK(back.labels == m.labels);
    CHECK(back.grid.same_frame(m.grid, 1e-5));
  }

  ScalarField f(m.grid);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = std::sin(0.1 * double(i)) * 5.0;
  for (const char* name : {"f.mrc", "f.raw"}) {
    const std::string p = (dir / name).string();
    write_field(p, f);
    const ScalarField back = read_field(p);
    REQUIRE(back.values.size() == f.values.size());
    for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(f.values[i]).epsilon(1e-6));
  }

  std::ofstream((dir / "bad.mrc").string()) << "not an mrc file";
  CHECK_THROWS(read_volume((dir / "bad.mrc").string()));
}
