#include "surfora/phantoms.hpp"

#include <cmath>
#include <map>
#include <random>

namespace surfora::phantom {

namespace {

constexpr double kPi = 3.14159265358979323846;

template <typename Pred>
VoxelGrid rasterize(const GridGeometry& g, Pred inside) {
  VoxelGrid m(g);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < g.dims.z(); ++k)
    for (int j = 0; j < g.dims.y(); ++j)
      for (int i = 0; i < g.dims.x(); ++i)
        if (inside(g.world(i, j, k))) m(i, j, k) = 1;
  return m;
}

}  // namespace

GridGeometry cube_grid(int n, double voxel_nm) {
  GridGeometry g;
  g.dims = Vec3i::Constant(n);
  g.spacing = Vec3::Constant(voxel_nm);
  g.origin = Vec3::Zero();
  return g;
}

Vec3 grid_center(const GridGeometry& g) {
  return g.origin + 0.5 * (g.dims.cast<double>() - Vec3::Ones()).cwiseProduct(g.spacing);
}

VoxelGrid sphere_shell(const GridGeometry& g, const Vec3& c, double radius, double thickness) {
  return rasterize(g, [&](const Vec3& p) { return std::abs((p - c).norm() - radius) <= 0.5 * thickness; });
}

VoxelGrid ball(const GridGeometry& g, const Vec3& c, double radius) {
  return rasterize(g, [&](const Vec3& p) { return (p - c).norm() <= radius; });
}

VoxelGrid hemisphere_shell(const GridGeometry& g, const Vec3& c, double radius, double thickness) {
  return rasterize(g, [&](const Vec3& p) {
    return p.z() >= c.z() && std::abs((p - c).norm() - radius) <= 0.5 * thickness;
  });
}

VoxelGrid two_sheets(const GridGeometry& g, const Vec3& c, double separation, double thickness,
                     double half_extent) {
  return rasterize(g, [&](const Vec3& p) {
    if (std::abs(p.x() - c.x()) > half_extent || std::abs(p.y() - c.y()) > half_extent) return false;
    const double dz = p.z() - c.z();
    return std::abs(dz + 0.5 * separation) <= 0.5 * thickness || std::abs(dz - 0.5 * separation) <= 0.5 * thickness;
  });
}

McsPhantom mcs(const GridGeometry& g, double separation, double thickness, double r_inner, double half_angle,
               double half_length) {
  McsPhantom out;
  out.separation = separation;
  out.r_inner = r_inner;
  const Vec3 c = grid_center(g);
  const double r_outer = r_inner + separation;
  // Axis above the centre so both sheets bulge downward around the centre.
  out.axis_point = Vec3(c.x(), c.y(), c.z() + r_inner + 0.5 * separation);
  const Vec3 a = out.axis_point;
  out.membrane = rasterize(g, [&](const Vec3& p) {
    if (std::abs(p.y() - a.y()) > half_length) return false;
    const double dx = p.x() - a.x(), dz = p.z() - a.z();
    const double ang = std::atan2(dx, -dz);
    if (std::abs(ang) > half_angle) return false;
    const double r = std::hypot(dx, dz);
    return std::abs(r - r_inner) <= 0.5 * thickness || std::abs(r - r_outer) <= 0.5 * thickness;
  });
  // Box around the contact site, narrower than the sheets so the ROI crops them.
  const double bx = 0.8 * r_inner * std::sin(half_angle);
  const double by = 0.85 * half_length;
  const double z_lo = a.z() - r_outer - thickness - 2.0;
  const double z_hi = a.z() - r_inner * std::cos(half_angle) + thickness;
  out.rois = rasterize(g, [&](const Vec3& p) {
    return std::abs(p.x() - a.x()) <= bx && std::abs(p.y() - a.y()) <= by && p.z() >= z_lo && p.z() <= z_hi;
  });
  return out;
}

PointCloud fibonacci_sphere(int n, double radius, const Vec3& c) {
  PointCloud pc;
  const double ga = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 d(r * std::cos(ga * i), r * std::sin(ga * i), z);
    pc.points.push_back(c + radius * d);
    pc.normals.push_back(d);
  }
  return pc;
}

PointCloud fibonacci_hemisphere(int n, double radius, const Vec3& c) {
  PointCloud pc;
  const double ga = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 d(r * std::cos(ga * i), r * std::sin(ga * i), z);
    pc.points.push_back(c + radius * d);
    pc.normals.push_back(d);
  }
  return pc;
}

PointCloud cylinder_cloud(int n_around, int n_along, double radius, double length) {
  PointCloud pc;
  for (int j = 0; j < n_along; ++j) {
    const double z = -0.5 * length + length * (j + 0.5) / n_along;
    const double shift = (j & 1) ? 0.5 : 0.0;
    for (int i = 0; i < n_around; ++i) {
      const double t = 2.0 * kPi * (i + shift) / n_around;
      const Vec3 d(std::cos(t), std::sin(t), 0.0);
      pc.points.push_back(Vec3(radius * d.x(), radius * d.y(), z));
      pc.normals.push_back(d);
    }
  }
  return pc;
}

PointCloud torus_cloud(int n_major, int n_minor, double major, double minor) {
  PointCloud pc;
  for (int i = 0; i < n_major; ++i) {
    for (int j = 0; j < n_minor; ++j) {
      const double u = 2.0 * kPi * i / n_major;
      const double v = 2.0 * kPi * (j + 0.5 * (i & 1)) / n_minor;
      const Vec3 d(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
      const Vec3 ring(major * std::cos(u), major * std::sin(u), 0.0);
      pc.points.push_back(ring + minor * d);
      pc.normals.push_back(d);
    }
  }
  return pc;
}

PointCloud plane_cloud(int nx, int ny, double spacing, double z) {
  PointCloud pc;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      pc.points.push_back(Vec3(i * spacing, j * spacing, z));
      pc.normals.push_back(Vec3::UnitZ());
    }
  return pc;
}

TriangleMesh icosphere(double radius, int subdivisions, const Vec3& c) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[std::size_t(a)] + v[std::size_t(b)]).normalized());
      const int id = int(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> nf;
    nf.reserve(f.size() * 4);
    for (const Face& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), cc = midpoint(tri[2], tri[0]);
      nf.push_back({tri[0], a, cc});
      nf.push_back({tri[1], b, a});
      nf.push_back({tri[2], cc, b});
      nf.push_back({a, b, cc});
    }
    f.swap(nf);
  }
  TriangleMesh m;
  for (const Vec3& d : v) {
    m.vertices.push_back(c + radius * d);
    m.normals.push_back(d);
  }
  m.faces = f;
  return m;
}

TriangleMesh cylinder_mesh(double radius, double length, int n_around, int n_along) {
  TriangleMesh m;
  for (int j = 0; j <= n_along; ++j) {
    const double z = -0.5 * length + length * j / n_along;
    for (int i = 0; i < n_around; ++i) {
      const double t = 2.0 * kPi * (i + 0.5 * (j & 1)) / n_around;
      const Vec3 d(std::cos(t), std::sin(t), 0.0);
      m.vertices.push_back(Vec3(radius * d.x(), radius * d.y(), z));
      m.normals.push_back(d);
    }
  }
  auto id = [&](int i, int j) { return j * n_around + ((i % n_around) + n_around) % n_around; };
  for (int j = 0; j < n_along; ++j)
    for (int i = 0; i < n_around; ++i) {
      if (j & 1) {
        m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      } else {
        m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  return m;
}

TriangleMesh plane_mesh(int nx, int ny, double spacing, double z) {
  TriangleMesh m;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      m.vertices.push_back(Vec3(i * spacing, j * spacing, z));
      m.normals.push_back(Vec3::UnitZ());
    }
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i, b = a + 1, c = a + nx, d = c + 1;
      m.faces.push_back({a, b, d});
      m.faces.push_back({a, d, c});
    }
  return m;
}

void randomize_signs(PointCloud& cloud, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& n : cloud.normals)
    if (rng() & 1u) n = -n;
}

}  // namespace surfora::phantom
