#include "surfora/meshing.hpp"

#include "surfora/fields.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace surfora {

namespace {

// h^2 * (G^T G) x for the 7-point Neumann Laplacian on node values.
void apply_laplacian(const GridGeometry& g, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  const int nx = g.dims.x(), ny = g.dims.y(), nz = g.dims.z();
  const Index sx = 1, sy = nx, sz = Index(nx) * ny;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const Index c = g.linear(i, j, k);
        const double xc = x[c];
        double s = 0.0;
        if (i > 0) s += xc - x[c - sx];
        if (i + 1 < nx) s += xc - x[c + sx];
        if (j > 0) s += xc - x[c - sy];
        if (j + 1 < ny) s += xc - x[c + sy];
        if (k > 0) s += xc - x[c - sz];
        if (k + 1 < nz) s += xc - x[c + sz];
        y[c] = s;
      }
}

void splat(const GridGeometry& g, const Vec3& p, double w0, const Vec3& value, std::vector<ScalarField*> fields,
           ScalarField& count) {
  const Vec3 q = g.continuous_index(p);
  const Vec3i base(int(std::floor(q.x())), int(std::floor(q.y())), int(std::floor(q.z())));
  const Vec3 t = q - base.cast<double>();
  for (int c = 0; c < 8; ++c) {
    const Vec3i o(c & 1, (c >> 1) & 1, (c >> 2) & 1);
    const Vec3i v = base + o;
    if (!g.contains(v)) continue;
    double w = w0;
    for (int a = 0; a < 3; ++a) w *= o[a] ? t[a] : 1.0 - t[a];
    for (int a = 0; a < 3; ++a) (*fields[std::size_t(a)])(v.x(), v.y(), v.z()) += w * value[a];
    count(v.x(), v.y(), v.z()) += w;
  }
}

}  // namespace

TriangleMesh poisson_reconstruct(const PointCloud& cloud, const MeshParams& params, PoissonStats* stats) {
  params.validate();
  cloud.validate();
  if (cloud.size() < 4) throw std::invalid_argument("poisson_reconstruct requires at least 4 points");
  if (!cloud.has_normals()) throw std::invalid_argument("poisson_reconstruct requires oriented normals");

  Vec3 lo = cloud.points[0], hi = cloud.points[0];
  for (const Vec3& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double L = (hi - lo).maxCoeff();
  if (!(L > 0.0)) throw std::invalid_argument("poisson_reconstruct: degenerate bounding box");
  const int cells = 1 << params.poisson_depth;
  const double h = std::max(1.2 * L / cells, L / (cells - 6));
  const double pad = 0.5 * (cells * h - L);
  GridGeometry g;
  g.spacing = Vec3::Constant(h);
  g.origin = lo - Vec3::Constant(pad);
  for (int a = 0; a < 3; ++a) g.dims[a] = std::min(cells, int(std::ceil((hi[a] - lo[a] + 2.0 * pad) / h))) + 1;

  ScalarField vx(g), vy(g), vz(g), count(g);
  for (std::size_t i = 0; i < cloud.size(); ++i) splat(g, cloud.points[i], 1.0, cloud.normals[i], {&vx, &vy, &vz}, count);
  vx = gaussian_smooth(vx, h);
  vy = gaussian_smooth(vy, h);
  vz = gaussian_smooth(vz, h);
  count = gaussian_smooth(count, h);

  // rhs = h^2 G^T V with V averaged onto grid edges
  const Index n = g.size();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  const ScalarField* comp[3] = {&vx, &vy, &vz};
  const int nx = g.dims.x(), ny = g.dims.y(), nz = g.dims.z();
  for (int a = 0; a < 3; ++a) {
    const ScalarField& V = *comp[a];
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          Vec3i nb(i, j, k);
          nb[a] += 1;
          if (!g.contains(nb)) continue;
          const Index c0 = g.linear(i, j, k), c1 = g.linear(nb);
          const double ve = 0.5 * (V.values[std::size_t(c0)] + V.values[std::size_t(c1)]) * h;
          b[c0] -= ve;
          b[c1] += ve;
        }
  }
  b.array() -= b.mean();

  // Jacobi-preconditioned conjugate gradients
  Eigen::VectorXd diag(n);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        diag[g.linear(i, j, k)] = (i > 0) + (i + 1 < nx) + (j > 0) + (j + 1 < ny) + (k > 0) + (k + 1 < nz);
  const Eigen::VectorXd inv_diag = diag.cwiseInverse();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), r = b, z = inv_diag.cwiseProduct(r), p = z, Ap(n);
  const double bnorm = b.norm();
  double rz = r.dot(z);
  double rel = bnorm > 0.0 ? 1.0 : 0.0;
  int it = 0;
  const int max_it = 20000;
  const double tol = 1e-8;
  while (rel > tol && it < max_it) {
    apply_laplacian(g, p, Ap);
    const double alpha = rz / p.dot(Ap);
    x.noalias() += alpha * p;
    r.noalias() -= alpha * Ap;
    ++it;
    rel = r.norm() / bnorm;
    if (rel <= tol) break;
    z = inv_diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (!(rel <= tol)) {
    std::ostringstream msg;
    msg << "poisson solver did not converge: relative residual " << rel << " after " << it << " iterations";
    throw std::runtime_error(msg.str());
  }

  ScalarField chi(g);
  for (Index i = 0; i < n; ++i) chi.values[std::size_t(i)] = x[i];
  double iso = 0.0;
  for (const Vec3& p : cloud.points) iso += sample_field(chi, p);
  iso /= double(cloud.size());

  TriangleMesh mesh = marching_cubes(chi, iso);
  std::vector<double> density(mesh.num_vertices());
  for (std::size_t v = 0; v < density.size(); ++v) density[v] = sample_field(count, mesh.vertices[v]);
  mesh.channels["density"] = density;

  PoissonStats st;
  st.iterations = it;
  st.relative_residual = rel;
  st.iso_value = iso;
  st.dims = g.dims;
  if (params.density_trim_quantile > 0.0 && !density.empty()) {
    std::vector<double> sorted = density;
    const std::size_t q = std::min(sorted.size() - 1, std::size_t(params.density_trim_quantile * double(sorted.size())));
    std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(q), sorted.end());
    const double thr = sorted[q];
    std::vector<bool> drop(density.size());
    for (std::size_t v = 0; v < density.size(); ++v) {
      drop[v] = density[v] < thr;
      st.trimmed_vertices += drop[v];
    }
    mesh = remove_vertices(mesh, drop);
  }
  mesh = mesh_cleanup(mesh);
  mesh.normals = compute_vertex_normals(mesh);
  if (stats) *stats = st;
  return mesh;
}

}  // namespace surfora
