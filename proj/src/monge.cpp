#include "surfora/monge.hpp"

#include <Eigen/Dense>

namespace surfora {

LocalFrame frame_from_normal(const Vec3& origin, const Vec3& n_in) {
  LocalFrame f;
  f.origin = origin;
  f.n = n_in.normalized();
  int axis = 0;
  f.n.cwiseAbs().minCoeff(&axis);
  // (e - (e.n) n) is unchanged when n changes sign.
  const Vec3 e = Vec3::Unit(axis);
  f.t1 = (e - e.dot(f.n) * f.n).normalized();
  f.t2 = f.n.cross(f.t1);
  return f;
}

PcaResult pca_frame(const std::vector<Vec3>& points, const std::vector<double>& weights) {
  PcaResult r;
  const std::size_t n = points.size();
  if (n == 0) {
    r.degenerate = true;
    r.eigenvalues.setZero();
    return r;
  }
  double wsum = 0.0;
  Vec3 c = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    c += w * points[i];
    wsum += w;
  }
  c /= wsum;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const Vec3 d = points[i] - c;
    cov.noalias() += w * d * d.transpose();
  }
  cov /= wsum;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  r.eigenvalues = es.eigenvalues();
  r.frame.origin = c;
  r.frame.n = es.eigenvectors().col(0).normalized();
  r.frame.t1 = es.eigenvectors().col(2).normalized();
  r.frame.t2 = r.frame.n.cross(r.frame.t1);
  r.degenerate = n < 3 || !(r.eigenvalues[1] > 1e-12 * std::max(r.eigenvalues[2], 1e-300));
  return r;
}

MongeCoeffs fit_monge(const std::vector<Vec3>& points, const std::vector<double>& weights,
                      const LocalFrame& frame, MongeFitOptions options) {
  MongeCoeffs m;
  m.frame = frame;
  const int cols = 3 + (options.linear_terms ? 2 : 0) + (options.offset ? 1 : 0);
  const int n = int(points.size());
  m.support = n;
  if (n < cols) return m;
  Eigen::MatrixXd A(n, cols);
  Eigen::VectorXd z(n), sw(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 l = frame.to_local(points[std::size_t(i)]);
    const double w = weights.empty() ? 1.0 : weights[std::size_t(i)];
    sw[i] = std::sqrt(std::max(w, 0.0));
    int c = 0;
    A(i, c++) = l.x() * l.x();
    A(i, c++) = 2.0 * l.x() * l.y();
    A(i, c++) = l.y() * l.y();
    if (options.linear_terms) {
      A(i, c++) = l.x();
      A(i, c++) = l.y();
    }
    if (options.offset) A(i, c++) = 1.0;
    z[i] = l.z();
  }
  const Eigen::MatrixXd Aw = sw.asDiagonal() * A;
  const Eigen::VectorXd zw = sw.cwiseProduct(z);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Aw);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) return m;
  const Eigen::VectorXd x = qr.solve(zw);
  int c = 0;
  m.a = x[c++];
  m.b = x[c++];
  m.c = x[c++];
  if (options.linear_terms) {
    m.d = x[c++];
    m.e = x[c++];
  }
  if (options.offset) m.f = x[c++];
  const Eigen::VectorXd res = A * x - z;
  double wr = 0.0, ws = 0.0;
  for (int i = 0; i < n; ++i) {
    wr += sw[i] * sw[i] * res[i] * res[i];
    ws += sw[i] * sw[i];
  }
  m.residual_rms = ws > 0.0 ? std::sqrt(wr / ws) : 0.0;
  m.ok = std::isfinite(m.a) && std::isfinite(m.b) && std::isfinite(m.c);
  return m;
}

}  // namespace surfora
