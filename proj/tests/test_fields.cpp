#include "support.hpp"

#include "surfora/fields.hpp"
#include "surfora/phantoms.hpp"

#include <doctest.h>

using namespace surfora;
using namespace surfora::testing;

namespace {

ScalarField analytic_sphere(const GridGeometry& g, const Vec3& c, double r) {
  ScalarField f(g);
  for (Index i = 0; i < g.size(); ++i) f.values[std::size_t(i)] = (g.world(g.unravel(i)) - c).norm() - r;
  return f;
}

}  // namespace

TEST_CASE("signed distance of a voxelised ball") {
  const GridGeometry g = phantom::cube_grid(40);
  const Vec3 c = phantom::grid_center(g);
  const VoxelGrid b = phantom::ball(g, c, 12.0);
  const ScalarField phi = signed_distance_field(b);
  for (Index i = 0; i < g.size(); ++i) {
    const double v = phi.values[std::size_t(i)];
    const double exact = (g.world(g.unravel(i)) - c).norm() - 12.0;
    CHECK((v < 0.0) == (b.labels[std::size_t(i)] != 0));
    CHECK(std::abs(v - exact) <= 1.0);
  }
  const ScalarField up = signed_distance_field(b, 2);
  CHECK(up.grid.spacing.x() == doctest::Approx(0.5));
  CHECK(up.grid.dims.x() == 79);
}

TEST_CASE("mean curvature flow never crosses the reference field") {
  std::mt19937_64 rng(9);
  const GridGeometry g = phantom::cube_grid(32);
  const Vec3 c = phantom::grid_center(g);
  VoxelGrid m = phantom::two_sheets(g, c, 10.0, 4.0, 12.0);
  const ScalarField ref = signed_distance_field(m);
  std::normal_distribution<double> noise(0.0, 0.7);
  ScalarField start = ref;
  for (double& v : start.values) v += noise(rng);
  FlowParams p;
  p.steps = 25;
  const ScalarField out = mean_curvature_flow(start, ref, p);
  for (std::size_t i = 0; i < out.values.size(); ++i) CHECK(out.values[i] >= ref.values[i]);

  FlowParams bad;
  bad.dt = max_stable_dt(g) * 1.5;
  CHECK_THROWS_AS(mean_curvature_flow(ref, ref, bad), std::invalid_argument);
  CHECK(max_stable_dt(g) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("curvature flow shrinks a sphere at the analytic rate") {
  // d r / dt = -2 / r for a sphere
  const GridGeometry g = phantom::cube_grid(40);
  const Vec3 c = phantom::grid_center(g);
  const double r0 = 10.0, dt = 0.1;
  ScalarField phi = analytic_sphere(g, c, r0);
  const int steps = 20;
  for (int s = 0; s < steps; ++s) phi = curvature_flow_step(phi, dt, 1e-8);
  const double expected = std::sqrt(r0 * r0 - 4.0 * dt * steps);
  // radius where phi crosses zero along +x
  double r = 0.0;
  for (int i = int(c.x()); i + 1 < g.dims.x(); ++i) {
    const double a = phi(i, 20, 20), b = phi(i + 1, 20, 20);
    if (a <= 0.0 && b > 0.0) {
      r = (i + a / (a - b)) - c.x();
      break;
    }
  }
  CHECK(r == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("marching cubes on an analytic sphere") {
  const GridGeometry g = phantom::cube_grid(40);
  const Vec3 c = phantom::grid_center(g);
  const ScalarField phi = analytic_sphere(g, c, 12.0);
  const TriangleMesh m = marching_cubes(phi, 0.0);
  REQUIRE(m.num_faces() > 0);
  CHECK(euler_characteristic(m) == 2);
  for (bool b : boundary_vertices(m)) CHECK_FALSE(b);
  double worst = 0.0;
  for (const Vec3& v : m.vertices) worst = std::max(worst, std::abs((v - c).norm() - 12.0));
  CHECK(worst < 0.05);
  const double area = surface_area(m), exact = 4.0 * M_PI * 144.0;
  CHECK(std::abs(area - exact) / exact < 0.02);
  // face normals point toward increasing phi, i.e. outward
  for (int f = 0; f < int(m.num_faces()); ++f) {
    const Face& t = m.faces[std::size_t(f)];
    const Vec3 centroid = (m.vertices[std::size_t(t[0])] + m.vertices[std::size_t(t[1])] + m.vertices[std::size_t(t[2])]) / 3.0;
    CHECK(face_normal(m, f).dot(centroid - c) > 0.0);
  }
  CHECK(marching_cubes(phi, 1e6).faces.empty());
}

TEST_CASE("trilinear sampling reproduces linear functions") {
  GridGeometry g;
  g.dims = Vec3i(6, 5, 4);
  g.spacing = Vec3(1.0, 2.0, 0.5);
  g.origin = Vec3(-1.0, 2.0, 3.0);
  ScalarField f(g);
  auto lin = [](const Vec3& p) { return 1.5 * p.x() - 0.25 * p.y() + 2.0 * p.z() + 0.5; };
  for (Index i = 0; i < g.size(); ++i) f.values[std::size_t(i)] = lin(g.world(g.unravel(i)));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const Vec3 p = g.origin + Vec3(u(rng) * 5, u(rng) * 8, u(rng) * 1.5);
    bool clamped = true;
    CHECK(sample_field(f, p, &clamped) == doctest::Approx(lin(p)).epsilon(1e-12));
    CHECK_FALSE(clamped);
  }
  bool clamped = false;
  sample_field(f, g.origin - Vec3::Ones(), &clamped);
  CHECK(clamped);

  const ScalarField up = upsample(f, 3);
  CHECK(up.grid.dims == Vec3i(16, 13, 10));
  for (Index i = 0; i < up.grid.size(); ++i)
    CHECK(up.values[std::size_t(i)] == doctest::Approx(lin(up.grid.world(up.grid.unravel(i)))).epsilon(1e-12));

  const ScalarField constant(g, 3.25);
  for (double v : gaussian_smooth(constant, 1.3).values) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}
