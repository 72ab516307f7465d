#pragma once

#include "surfora/grid.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace surfora {

/// Orthonormal frame (t1, t2, n) anchored at `origin`.
struct LocalFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 t1 = Vec3::UnitX(), t2 = Vec3::UnitY(), n = Vec3::UnitZ();

  Vec3 to_local(const Vec3& p) const {
    const Vec3 d = p - origin;
    return {d.dot(t1), d.dot(t2), d.dot(n)};
  }
  Vec3 to_world(const Vec3& l) const { return origin + l.x() * t1 + l.y() * t2 + l.z() * n; }
};

/// Frame whose normal is `n`; t1 comes from the world axis least aligned with
/// n, so flipping n keeps t1 and negates t2.
LocalFrame frame_from_normal(const Vec3& origin, const Vec3& n);

struct PcaResult {
  LocalFrame frame;      // origin = weighted centroid, n = least-variance direction
  Vec3 eigenvalues;      // ascending
  bool degenerate = false;  // fewer than 3 points or (near) collinear
};

/// Weighted PCA of a point set. Empty `weights` means uniform.
PcaResult pca_frame(const std::vector<Vec3>& points, const std::vector<double>& weights = {});

/// Height function z = a x^2 + 2b xy + c y^2 + d x + e y + f in a local frame.
template <typename Scalar>
struct Monge {
  Scalar a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
  LocalFrame frame;
  bool ok = false;
  Scalar residual_rms = 0;
  int support = 0;

  Scalar height(Scalar x, Scalar y) const { return a * x * x + 2 * b * x * y + c * y * y + d * x + e * y + f; }

  /// Hessian [[2a, 2b], [2b, 2c]].
  Eigen::Matrix<Scalar, 2, 2> hessian() const {
    Eigen::Matrix<Scalar, 2, 2> h;
    h << 2 * a, 2 * b, 2 * b, 2 * c;
    return h;
  }

  /// Principal curvatures k1 >= k2 as the Hessian eigenvalues.
  std::pair<Scalar, Scalar> principal() const {
    const Scalar m = a + c;
    const Scalar r = std::sqrt((a - c) * (a - c) + 4 * b * b);
    return {m + r, m - r};
  }
  Scalar k_max() const {
    const auto [k1, k2] = principal();
    return std::max(std::abs(k1), std::abs(k2));
  }
  /// H = -(k1 + k2) / 2, positive for bending away from the frame normal.
  Scalar mean_curvature() const { return -(a + c); }
  /// K = k1 * k2.
  Scalar gaussian_curvature() const { return 4 * (a * c - b * b); }

  /// Unit normal of the height surface at (x, y), in world coordinates.
  Vec3 normal_at(Scalar x, Scalar y) const {
    const Scalar zx = 2 * a * x + 2 * b * y + d, zy = 2 * b * x + 2 * c * y + e;
    return (frame.n - zx * frame.t1 - zy * frame.t2).normalized();
  }
};

using MongeCoeffs = Monge<double>;

struct MongeFitOptions {
  bool linear_terms = true;  // d, e
  bool offset = true;        // f
};

/// Weighted least-squares fit of world points in `frame`. Fails (ok = false)
/// when the design matrix is rank deficient.
MongeCoeffs fit_monge(const std::vector<Vec3>& points, const std::vector<double>& weights,
                      const LocalFrame& frame, MongeFitOptions options = {});

}  // namespace surfora
