#include "support.hpp"

#include "surfora/mesh_io.hpp"
#include "surfora/meshing.hpp"
#include "surfora/phantoms.hpp"
#include "surfora/volume.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace surfora;
using namespace surfora::testing;

namespace {

bool is_closed(const TriangleMesh& m) {
  for (const auto& e : edge_faces(m))
    if (e.faces.size() != 2) return false;
  return true;
}

}  // namespace

TEST_CASE("SAT triangle-box test agrees with polygon clipping") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2.0, 2.0), s(0.1, 1.0);
  int hits = 0;
  for (int t = 0; t < 20000; ++t) {
    const Vec3 c(u(rng), u(rng), u(rng)), h(s(rng), s(rng), s(rng));
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), d(u(rng), u(rng), u(rng));
    const bool sat = triangle_box_overlap(c, h, a, b, d);
    hits += sat;
    CHECK(sat == clip_overlap(c, h, a, b, d));
  }
  CHECK(hits > 1000);
  CHECK(hits < 19000);
}

TEST_CASE("gap voxels are background at or beyond gap distance") {
  std::mt19937_64 rng(5);
  const VoxelGrid m = random_mask(rng, Vec3i(12, 11, 10), 0.05);
  const VoxelGrid gap = gap_voxels(m, 2.0);
  const auto d = brute_force_distance_to(m, true);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK((gap.labels[i] != 0) == (m.labels[i] == 0 && d[i] >= 2.0));
}

TEST_CASE("gap filter agrees with brute-force overlap on random grids") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 12 + 4 * trial;  // up to 32
    VoxelGrid support = random_mask(rng, Vec3i(n, n, n), 0.04);
    const GridGeometry& g = support.grid;
    // connected strips of triangles so the isolation rule has something to keep
    TriangleMesh mesh;
    std::uniform_real_distribution<double> u(0.0, n - 1.0), j(-0.4, 0.4);
    for (int strip = 0; strip < 40; ++strip) {
      const Vec3 o(u(rng), u(rng), u(rng));
      const Vec3 dir = Vec3(j(rng), j(rng), j(rng)).normalized() * 1.2;
      const int base = int(mesh.vertices.size());
      for (int k = 0; k < 6; ++k) {
        mesh.vertices.push_back((o + k * dir).cwiseMax(Vec3::Zero()).cwiseMin(Vec3::Constant(n - 1)));
        mesh.vertices.push_back((o + k * dir + Vec3(j(rng), j(rng), 1.0)).cwiseMax(Vec3::Zero()).cwiseMin(Vec3::Constant(n - 1)));
      }
      for (int k = 0; k < 5; ++k) {
        mesh.faces.push_back({base + 2 * k, base + 2 * k + 2, base + 2 * k + 1});
        mesh.faces.push_back({base + 2 * k + 1, base + 2 * k + 2, base + 2 * k + 3});
      }
    }
    MeshParams p;
    p.gap_dist_nm = 1.5;
    GapFilterStats st;
    const TriangleMesh out = gap_filter(mesh, support, p, &st);

    std::vector<int> kept;
    const std::multiset<FaceKey> expected = reference_gap_filter(mesh, support, 1.5, &kept);
    std::multiset<FaceKey> got;
    for (const Face& f : out.faces) got.insert(face_key(out, f));
    CHECK(st.removed_sat == int(mesh.num_faces() - kept.size()));
    CHECK(got == expected);
  }
}

TEST_CASE("ball pivoting closes a sampled sphere") {
  PointCloud pc = phantom::fibonacci_sphere(3000, 20.0);
  pc.labels.assign(pc.size(), 1u);
  BallPivotStats st;
  const TriangleMesh m = ball_pivot(pc, MeshParams{}, &st);
  CHECK(is_closed(m));
  CHECK(euler_characteristic(m) == 2);
  const double exact = 4.0 * M_PI * 400.0;
  CHECK(std::abs(surface_area(m) - exact) / exact < 0.03);
  for (int f = 0; f < int(m.num_faces()); ++f) {
    const Face& t = m.faces[std::size_t(f)];
    CHECK(face_normal(m, f).dot(pc.normals[std::size_t(t[0])]) > 0.0);
  }
  CHECK(st.radii.size() == 4);
  CHECK(m.channels.count("label"));
}

TEST_CASE("ball pivoting a grid plane leaves only the rim open") {
  const PointCloud pc = phantom::plane_cloud(20, 15, 1.0);
  MeshParams p;
  p.radii_nm = {1.0};
  const TriangleMesh m = ball_pivot(pc, p);
  CHECK(m.num_faces() == 2 * 19 * 14);
  const auto boundary = boundary_vertices(m);
  for (std::size_t v = 0; v < pc.size(); ++v) {
    const Vec3& q = pc.points[v];
    const bool rim = q.x() == 0.0 || q.y() == 0.0 || q.x() == 19.0 || q.y() == 14.0;
    CHECK(boundary[v] == rim);
  }
}

TEST_CASE("ball pivoting reports a failed radius scan") {
  PointCloud pc;
  for (int i = 0; i < 10; ++i) {
    pc.points.push_back(Vec3(i, 0, 0));
    pc.normals.push_back(Vec3::UnitZ());
  }
  MeshParams p;
  p.radii_nm = {2.0, 3.0};
  CHECK_THROWS_WITH(ball_pivot(pc, p), doctest::Contains("radius scan failed"));
}

TEST_CASE("two sheets stay apart after gap filtering") {
  const GridGeometry g = phantom::cube_grid(40);
  const Vec3 c = phantom::grid_center(g);
  PointCloud pc = phantom::plane_cloud(25, 25, 1.0, c.z() - 3.0);
  PointCloud top = phantom::plane_cloud(25, 25, 1.0, c.z() + 3.0);
  pc.append(top);
  MeshParams p;
  p.radii_nm = {1.0};
  TriangleMesh raw = ball_pivot(pc, p);
  // bridge the two rims at y = 0 with a vertical strip
  const int n = 25 * 25;
  for (int i = 0; i + 1 < 25; ++i) {
    raw.faces.push_back({i, i + 1, n + i});
    raw.faces.push_back({i + 1, n + i + 1, n + i});
  }
  auto bridging = [&](const TriangleMesh& m) {
    int b = 0;
    for (const Face& f : m.faces) {
      int up = 0;
      for (int v : f) up += m.vertices[std::size_t(v)].z() > c.z();
      b += up == 1 || up == 2;
    }
    return b;
  };
  CHECK(bridging(raw) > 0);
  GapFilterStats st;
  p.gap_dist_nm = 2.0;
  const TriangleMesh filtered = gap_filter(raw, pc, p, &st);
  CHECK(bridging(filtered) == 0);
  CHECK(filtered.num_faces() > 2 * 2 * 24 * 24 * 9 / 10);
}

TEST_CASE("Poisson reconstruction of a sampled sphere") {
  const PointCloud pc = phantom::fibonacci_sphere(4000, 15.0);
  MeshParams p;
  p.poisson_depth = 6;
  PoissonStats st;
  const TriangleMesh m = poisson_reconstruct(pc, p, &st);
  REQUIRE(m.num_faces() > 0);
  CHECK(st.relative_residual <= 1e-8);
  const double h = 30.0 * 1.2 / 64.0;
  std::vector<double> err;
  for (const Vec3& v : m.vertices) err.push_back(std::abs(v.norm() - 15.0));
  CHECK(mean(err) < 0.5 * h);
  for (std::size_t v = 0; v < m.num_vertices(); ++v) CHECK(m.normals[v].dot(m.vertices[v]) > 0.0);
  CHECK(m.channels.count("density"));
}

TEST_CASE("damped Laplacian smoothing keeps a plane flat and its rim fixed") {
  TriangleMesh m = phantom::plane_mesh(10, 10, 1.0, 2.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> j(-0.2, 0.2);
  for (auto& v : m.vertices) v += Vec3(j(rng), j(rng), 0.0);
  MeshParams p;
  p.smooth_iterations = 5;
  const TriangleMesh s = damped_laplacian_smooth(m, p);
  const auto rim = boundary_vertices(m);
  for (std::size_t v = 0; v < m.num_vertices(); ++v) {
    CHECK(s.vertices[v].z() == doctest::Approx(2.0).epsilon(1e-14));
    if (rim[v]) CHECK(s.vertices[v] == m.vertices[v]);
  }
}

TEST_CASE("mesh cleanup is idempotent") {
  std::mt19937_64 rng(2);
  TriangleMesh m = phantom::icosphere(5.0, 2);
  m.faces.push_back(m.faces[0]);
  m.faces.push_back({m.faces[1][2], m.faces[1][1], m.faces[1][0]});
  m.faces.push_back({0, 0, 1});
  m.vertices.push_back(Vec3(100, 0, 0));
  m.normals.push_back(Vec3::UnitX());
  CleanupStats st;
  const TriangleMesh once = mesh_cleanup(m, &st);
  CHECK(st.duplicate_faces == 2);
  CHECK(st.degenerate_faces == 1);
  CHECK(st.unreferenced_vertices == 1);
  const TriangleMesh twice = mesh_cleanup(once);
  CHECK(once.faces == twice.faces);
  CHECK(once.vertices == twice.vertices);
}

TEST_CASE("PLY round trip preserves geometry and float channels") {
  const auto dir = scratch_dir("ply");
  TriangleMesh m = phantom::icosphere(3.0, 2);
  std::vector<double> H(m.num_vertices());
  for (std::size_t v = 0; v < H.size(); ++v) H[v] = 0.05 + 1e-3 * std::sin(double(v));
  m.channels["H"] = H;
  for (auto fmt : {PlyFormat::Ascii, PlyFormat::BinaryLittleEndian}) {
    const std::string p = (dir / "m.ply").string();
    write_ply(p, m, fmt);
    const TriangleMesh back = read_ply_mesh(p);
    CHECK(back.faces == m.faces);
    REQUIRE(back.num_vertices() == m.num_vertices());
    for (std::size_t v = 0; v < H.size(); ++v) {
      CHECK((back.vertices[v] - m.vertices[v]).norm() < 1e-12);
      CHECK(std::abs(back.channels.at("H")[v] - H[v]) <= 1e-7);
    }
  }
  PointCloud pc = phantom::fibonacci_sphere(50, 2.0);
  pc.labels.assign(pc.size(), 3u);
  for (const char* name : {"c.ply", "c.xyz"}) {
    const std::string p = (dir / name).string();
    write_cloud(p, pc);
    const PointCloud back = read_cloud(p);
    CHECK(back.labels == pc.labels);
    REQUIRE(back.size() == pc.size());
    for (std::size_t i = 0; i < pc.size(); ++i) CHECK((back.points[i] - pc.points[i]).norm() < 1e-9);
  }
}

TEST_CASE("mesh parameters are validated") {
  MeshParams p;
  p.gap_dist_nm = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.radii_nm = {2.0, 1.0};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.smooth_lambda = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.density_trim_quantile = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
