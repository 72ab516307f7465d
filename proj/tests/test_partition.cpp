#include "support.hpp"

#include "surfora/fields.hpp"
#include "surfora/partition.hpp"
#include "surfora/phantoms.hpp"

#include <doctest.h>

#include <set>

using namespace surfora;
using namespace surfora::testing;

namespace {

double mean_radius(const TriangleMesh& m, const Vec3& c) {
  std::vector<double> r;
  for (const Vec3& v : m.vertices) r.push_back((v - c).norm());
  return mean(r);
}

std::multiset<std::array<double, 9>> face_set(const TriangleMesh& m) {
  std::multiset<std::array<double, 9>> s;
  for (const Face& f : m.faces) {
    std::array<std::array<double, 3>, 3> t;
    for (int k = 0; k < 3; ++k) {
      const Vec3& v = m.vertices[std::size_t(f[std::size_t(k)])];
      t[std::size_t(k)] = {v.x(), v.y(), v.z()};
    }
    std::sort(t.begin(), t.end());
    s.insert({t[0][0], t[0][1], t[0][2], t[1][0], t[1][1], t[1][2], t[2][0], t[2][1], t[2][2]});
  }
  return s;
}

}  // namespace

TEST_CASE("proxy side is the signed normal offset") {
  const TriangleMesh plane = phantom::plane_mesh(11, 11, 1.0, 0.0);
  const auto s = proxy_side({Vec3(5, 5, 2.5), Vec3(3.3, 4.1, -1.25), Vec3(5, 5, 0)}, plane);
  CHECK(s[0] == doctest::Approx(2.5));
  CHECK(s[1] == doctest::Approx(-1.25));
  CHECK(s[2] == doctest::Approx(0.0));
}

TEST_CASE("concentric shell surfaces split by connectivity") {
  const GridGeometry g = phantom::cube_grid(48);
  const Vec3 c = phantom::grid_center(g);
  const VoxelGrid shell = phantom::sphere_shell(g, c, 15.0, 6.0);
  const ScalarField sdf = signed_distance_field(shell);
  TriangleMesh iso = marching_cubes(sdf, 0.0);
  iso.normals = compute_vertex_normals(iso);
  const TriangleMesh proxy = phantom::icosphere(15.0, 3, c);

  const LeafletPair lp = split_isosurface(iso, proxy, &sdf);
  CHECK(lp.method == PartitionMethod::Connectivity);
  const auto parts = split_components(iso);
  REQUIRE(parts.size() == 2);
  const bool first_inner = mean_radius(parts[0], c) < mean_radius(parts[1], c);
  CHECK(face_set(lp.inner) == face_set(parts[first_inner ? 0 : 1]));
  CHECK(face_set(lp.outer) == face_set(parts[first_inner ? 1 : 0]));
  CHECK(mean_radius(lp.inner, c) < 15.0);
  CHECK(mean_radius(lp.outer, c) > 15.0);
  for (double v : lp.inner.channels.at("leaflet")) CHECK(v == 1.0);
  for (double v : lp.outer.channels.at("leaflet")) CHECK(v == 2.0);
}

TEST_CASE("open hemispherical shell is cut along the proxy") {
  const GridGeometry g = phantom::cube_grid(48);
  const Vec3 c = phantom::grid_center(g);
  const VoxelGrid shell = phantom::hemisphere_shell(g, c, 15.0, 4.0);
  const ScalarField sdf = signed_distance_field(shell);
  TriangleMesh iso = marching_cubes(sdf, 0.0);
  iso.channels["probe"].assign(iso.num_vertices(), 7.0);
  int ncomp = 0;
  face_components(iso, &ncomp);
  REQUIRE(ncomp == 1);

  // mid-surface proxy reaching a little past the rim
  const TriangleMesh sphere = phantom::icosphere(15.0, 4, c);
  std::vector<int> upper;
  for (int f = 0; f < int(sphere.num_faces()); ++f) {
    double z = 0.0;
    for (int v : sphere.faces[std::size_t(f)]) z += sphere.vertices[std::size_t(v)].z();
    if (z / 3.0 >= c.z() - 3.0) upper.push_back(f);
  }
  const TriangleMesh proxy = extract_faces(sphere, upper);

  const LeafletPair lp = split_isosurface(iso, proxy, &sdf);
  CHECK(lp.method == PartitionMethod::ProxySplit);
  CHECK(lp.cut_faces > 0);
  CHECK(lp.inner_components == 1);
  CHECK(lp.outer_components == 1);
  const double ri = mean_radius(lp.inner, c), ro = mean_radius(lp.outer, c);
  CHECK(ri < ro);
  CHECK(std::abs(0.5 * (ri + ro) - 15.0) <= 1.0);
  // channels survive the cut, cut vertices are flagged
  for (double v : lp.inner.channels.at("probe")) CHECK(v == doctest::Approx(7.0));
  double cut = 0.0;
  for (double v : lp.inner.channels.at("cut")) cut += v;
  CHECK(cut > 0.0);
  // together the halves cover the original area
  CHECK(surface_area(lp.inner) + surface_area(lp.outer) == doctest::Approx(surface_area(iso)).epsilon(1e-9));
}

TEST_CASE("partition fails without an intersection curve") {
  const TriangleMesh iso = phantom::icosphere(5.0, 2);
  const TriangleMesh far_proxy = phantom::plane_mesh(5, 5, 1.0, 50.0);
  CHECK_THROWS_WITH(split_isosurface(iso, far_proxy), doctest::Contains("cannot partition"));

  GridGeometry small = phantom::cube_grid(4);
  const ScalarField sdf(small);
  const TriangleMesh proxy = phantom::icosphere(5.0, 2);
  CHECK_THROWS_AS(split_isosurface(phantom::icosphere(5.0, 2, Vec3(40, 40, 40)), proxy, &sdf), std::invalid_argument);
}
