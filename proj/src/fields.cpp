#include "surfora/fields.hpp"

#include "surfora/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace surfora {

ScalarField signed_distance_field(const VoxelGrid& mask, int upsample_factor) {
  mask.validate();
  if (mask.count_foreground() == 0) throw std::invalid_argument("no foreground");
  if (upsample_factor < 1) throw std::invalid_argument("upsample_factor must be >= 1");
  const ScalarField outside = distance_to_foreground(mask);
  const ScalarField inside = euclidean_distance_transform(mask);
  ScalarField phi(mask.grid);
  for (std::size_t i = 0; i < phi.values.size(); ++i) phi.values[i] = outside.values[i] - inside.values[i];
  return upsample_factor == 1 ? phi : upsample(phi, upsample_factor);
}

ScalarField upsample(const ScalarField& field, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
  if (factor == 1) return field;
  GridGeometry g = field.grid;
  for (int a = 0; a < 3; ++a) g.dims[a] = (field.grid.dims[a] - 1) * factor + 1;
  g.spacing = field.grid.spacing / double(factor);
  ScalarField out(g);
  const double inv = 1.0 / factor;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < g.dims.z(); ++k) {
    const int k0 = std::min(k / factor, std::max(field.grid.dims.z() - 2, 0));
    const double tz = std::min(1.0, (k - k0 * factor) * inv);
    for (int j = 0; j < g.dims.y(); ++j) {
      const int j0 = std::min(j / factor, std::max(field.grid.dims.y() - 2, 0));
      const double ty = std::min(1.0, (j - j0 * factor) * inv);
      for (int i = 0; i < g.dims.x(); ++i) {
        const int i0 = std::min(i / factor, std::max(field.grid.dims.x() - 2, 0));
        const double tx = std::min(1.0, (i - i0 * factor) * inv);
        double v = 0.0;
        for (int c = 0; c < 8; ++c) {
          const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
          const double w = (di ? tx : 1 - tx) * (dj ? ty : 1 - ty) * (dk ? tz : 1 - tz);
          if (w != 0.0) v += w * field.clamped(i0 + di, j0 + dj, k0 + dk);
        }
        out(i, j, k) = v;
      }
    }
  }
  return out;
}

namespace {

void blur_axis(const GridGeometry& g, const std::vector<double>& in, std::vector<double>& out, int axis,
               const std::vector<double>& kernel) {
  const int r = int(kernel.size() / 2);
  const int n = g.dims[axis];
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  const int n1 = g.dims[a1], n2 = g.dims[a2];
  Index stride = 1;
  for (int a = 0; a < axis; ++a) stride *= g.dims[a];
  const Index lines = Index(n1) * n2;
#pragma omp parallel for schedule(static)
  for (Index l = 0; l < lines; ++l) {
    Vec3i ijk;
    ijk[axis] = 0;
    ijk[a1] = int(l % n1);
    ijk[a2] = int(l / n1);
    const Index base = g.linear(ijk);
    for (int q = 0; q < n; ++q) {
      double s = 0.0;
      for (int o = -r; o <= r; ++o) {
        const int qq = std::clamp(q + o, 0, n - 1);
        s += kernel[std::size_t(o + r)] * in[std::size_t(base + qq * stride)];
      }
      out[std::size_t(base + q * stride)] = s;
    }
  }
}

}  // namespace

ScalarField gaussian_smooth(const ScalarField& field, double sigma_nm) {
  if (!(sigma_nm > 0.0)) return field;
  ScalarField out = field;
  std::vector<double> tmp(field.values.size());
  for (int axis = 0; axis < 3; ++axis) {
    const double s = sigma_nm / field.grid.spacing[axis];
    const int r = std::max(1, int(std::ceil(3.0 * s)));
    std::vector<double> kernel(std::size_t(2 * r + 1));
    double sum = 0.0;
    for (int o = -r; o <= r; ++o) sum += kernel[std::size_t(o + r)] = std::exp(-0.5 * o * o / (s * s));
    for (double& w : kernel) w /= sum;
    blur_axis(field.grid, out.values, tmp, axis, kernel);
    out.values.swap(tmp);
  }
  return out;
}

void FlowParams::validate() const {
  if (steps < 0) throw std::invalid_argument("flow steps must be >= 0");
  if (upsample_factor < 1) throw std::invalid_argument("upsample_factor must be >= 1");
  if (!(grad_epsilon > 0.0)) throw std::invalid_argument("grad_epsilon must be > 0");
}

double max_stable_dt(const GridGeometry& grid) {
  const double h = grid.min_spacing();
  return h * h / 6.0;
}

ScalarField curvature_flow_step(const ScalarField& f, double dt, double grad_epsilon) {
  const GridGeometry& g = f.grid;
  const Vec3 inv2h = (2.0 * g.spacing).cwiseInverse();
  const Vec3 invh2 = g.spacing.cwiseProduct(g.spacing).cwiseInverse();
  const double eps2 = grad_epsilon * grad_epsilon;
  ScalarField out(g);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < g.dims.z(); ++k)
    for (int j = 0; j < g.dims.y(); ++j)
      for (int i = 0; i < g.dims.x(); ++i) {
        auto v = [&](int a, int b, int c) { return f.clamped(i + a, j + b, k + c); };
        const double c0 = v(0, 0, 0);
        const double fx = (v(1, 0, 0) - v(-1, 0, 0)) * inv2h.x();
        const double fy = (v(0, 1, 0) - v(0, -1, 0)) * inv2h.y();
        const double fz = (v(0, 0, 1) - v(0, 0, -1)) * inv2h.z();
        const double fxx = (v(1, 0, 0) - 2 * c0 + v(-1, 0, 0)) * invh2.x();
        const double fyy = (v(0, 1, 0) - 2 * c0 + v(0, -1, 0)) * invh2.y();
        const double fzz = (v(0, 0, 1) - 2 * c0 + v(0, 0, -1)) * invh2.z();
        const double fxy = (v(1, 1, 0) - v(1, -1, 0) - v(-1, 1, 0) + v(-1, -1, 0)) * inv2h.x() * inv2h.y();
        const double fxz = (v(1, 0, 1) - v(1, 0, -1) - v(-1, 0, 1) + v(-1, 0, -1)) * inv2h.x() * inv2h.z();
        const double fyz = (v(0, 1, 1) - v(0, 1, -1) - v(0, -1, 1) + v(0, -1, -1)) * inv2h.y() * inv2h.z();
        const double num = fxx * (fy * fy + fz * fz) + fyy * (fx * fx + fz * fz) + fzz * (fx * fx + fy * fy) -
                           2.0 * (fx * fy * fxy + fx * fz * fxz + fy * fz * fyz);
        const double den = fx * fx + fy * fy + fz * fz + eps2;
        out(i, j, k) = c0 + dt * num / den;
      }
  return out;
}

ScalarField mean_curvature_flow(const ScalarField& field, const ScalarField& ref_field, const FlowParams& params) {
  params.validate();
  if (!field.grid.same_frame(ref_field.grid) || field.values.size() != ref_field.values.size())
    throw std::invalid_argument("mean_curvature_flow: field and reference grids differ");
  const double dt_max = max_stable_dt(field.grid);
  const double dt = params.dt > 0.0 ? params.dt : 0.8 * dt_max;
  if (dt > dt_max * (1.0 + 1e-12))
    throw std::invalid_argument("dt " + std::to_string(dt) + " violates stability bound h^2/6 = " +
                                std::to_string(dt_max));

  auto project = [&](ScalarField& f) {
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = std::max(f.values[i], ref_field.values[i]);
  };
  const double sigma = params.gaussian_sigma_nm < 0.0 ? field.grid.min_spacing() : params.gaussian_sigma_nm;
  if (params.steps == 0 && sigma == 0.0) return field;
  ScalarField phi = gaussian_smooth(field, sigma);
  project(phi);
  for (int s = 0; s < params.steps; ++s) {
    phi = curvature_flow_step(phi, dt, params.grad_epsilon);
    project(phi);
  }
  return phi;
}

namespace {

// Continuous index clamped into the grid, snapped to integers within 1e-9.
double clamp_coord(double c, int n, bool& clamped) {
  const double r = std::round(c);
  if (std::abs(c - r) < 1e-9) c = r;
  if (c < 0.0) {
    clamped = true;
    return 0.0;
  }
  if (c > n - 1) {
    clamped = true;
    return double(n - 1);
  }
  return c;
}

}  // namespace

double sample_field(const ScalarField& field, const Vec3& p, bool* clamped) {
  const GridGeometry& g = field.grid;
  const Vec3 c = g.continuous_index(p);
  bool cl = false;
  int i0[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const double ca = clamp_coord(c[a], g.dims[a], cl);
    i0[a] = std::min(int(std::floor(ca)), std::max(g.dims[a] - 2, 0));
    t[a] = ca - i0[a];
  }
  if (clamped) *clamped = cl;
  double v = 0.0;
  for (int q = 0; q < 8; ++q) {
    const int di = q & 1, dj = (q >> 1) & 1, dk = (q >> 2) & 1;
    const double w = (di ? t[0] : 1 - t[0]) * (dj ? t[1] : 1 - t[1]) * (dk ? t[2] : 1 - t[2]);
    if (w != 0.0) v += w * field.clamped(i0[0] + di, i0[1] + dj, i0[2] + dk);
  }
  return v;
}

Vec3 sample_gradient(const ScalarField& field, const Vec3& p) {
  Vec3 grad;
  for (int a = 0; a < 3; ++a) {
    Vec3 d = Vec3::Zero();
    d[a] = 0.5 * field.grid.spacing[a];
    grad[a] = (sample_field(field, p + d) - sample_field(field, p - d)) / field.grid.spacing[a];
  }
  return grad;
}

}  // namespace surfora
