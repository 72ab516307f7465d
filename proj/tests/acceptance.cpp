// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include "support.hpp"

#include "surfora/fields.hpp"
#include "surfora/heat.hpp"
#include "surfora/medial.hpp"
#include "surfora/mesh_io.hpp"
#include "surfora/meshing.hpp"
#include "surfora/metrics.hpp"
#include "surfora/normals.hpp"
#include "surfora/parallel.hpp"
#include "surfora/partition.hpp"
#include "surfora/phantoms.hpp"
#include "surfora/pipeline.hpp"
#include "surfora/volume.hpp"
#include "surfora/volume_io.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using namespace surfora;
using namespace surfora::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::map<std::string, std::string> digests(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "run_report.json") out[e.path().filename().string()] = file_digest(e.path().string());
  return out;
}

double mean_radius(const TriangleMesh& m, const Vec3& c) {
  std::vector<double> r;
  for (const Vec3& v : m.vertices) r.push_back((v - c).norm());
  return mean(r);
}

// 1
void medial_fidelity(Outcome& o) {
  set_num_threads(8);
  const GridGeometry g = phantom::cube_grid(128, 1.0);
  const Vec3 c = phantom::grid_center(g);
  const VoxelGrid shell = phantom::sphere_shell(g, c, 20.0, 4.0);
  Stopwatch sw;
  const PointCloud medial = extract_medial_surface(shell, MedialParams{});
  const double t = sw.seconds();
  std::vector<double> r;
  int close = 0;
  for (const Vec3& p : medial.points) {
    r.push_back((p - c).norm());
    close += std::abs(r.back() - 20.0) <= 0.5;
  }
  const double m = mean(r), frac = medial.empty() ? 0.0 : double(close) / double(r.size());
  o.detail << "points=" << r.size() << " mean_r=" << m << " within_0.5nm=" << frac << " time=" << t << "s ";
  o.require(!medial.empty(), "non-empty medial cloud");
  o.require(m >= 19.5 && m <= 20.5, "mean radius in [19.5, 20.5]");
  o.require(frac >= 0.95, "95% within 0.5 nm");
  o.require(t < 60.0, "runtime < 60 s");
}

// 2
void gap_preservation(Outcome& o) {
  const auto root = scratch_dir("accept_gap");
  Stopwatch total;
  for (double sep : {10.0, 15.0, 20.0, 25.0, 30.0}) {
    const GridGeometry g = phantom::cube_grid(64, 1.0);
    const Vec3 c = phantom::grid_center(g);
    const fs::path dir = root / ("sep" + std::to_string(int(sep)));
    fs::create_directories(dir);
    write_volume((dir / "membrane.mrc").string(), phantom::two_sheets(g, c, sep, 4.0, 0.35 * 64));
    const PipelineConfig cfg = parse_config(json{{"schema_version", 1},
                                                 {"threads", 8},
                                                 {"output_dir", (dir / "out").string()},
                                                 {"stages", {"roi-post", "medial", "iso", "orient", "mesh", "distance"}},
                                                 {"inputs", {{"membrane", (dir / "membrane.mrc").string()}}}});
    const RunReport rep = run_pipeline(cfg);
    if (!rep.ok) {
      o.require(false, "pipeline at separation " + std::to_string(sep) + ": " + rep.error);
      continue;
    }
    const fs::path out = dir / "out";

    // (a) obstacle invariant against the field recomputed from the segmentation
    const VoxelGrid labels = read_volume((out / "roi_labels.mrc").string());
    const ScalarField ref = signed_distance_field(binarize(labels), cfg.iso.flow.upsample_factor);
    const ScalarField phi = read_field((out / "sdf.mrc").string());
    std::size_t violations = ref.values.size() == phi.values.size() ? 0 : ref.values.size();
    for (std::size_t i = 0; i < std::min(ref.values.size(), phi.values.size()); ++i)
      violations += double(phi.values[i]) < double(float(ref.values[i]));

    // (b) no face may join the two sheets
    const TriangleMesh mesh = read_ply_mesh((out / "medial_mesh.ply").string());
    int bridging = 0;
    for (const Face& f : mesh.faces) {
      bool below = false, above = false;
      for (int v : f) (mesh.vertices[std::size_t(v)].z() < c.z() ? below : above) = true;
      bridging += below && above;
    }

    // (c) mean distance against the construction
    const json stats = json::parse(std::ifstream(out / "distance.json"));
    const double m = stats["mean"].get<double>();
    o.detail << "sep=" << sep << ":{phi<ref=" << violations << ", bridging=" << bridging << ", mean=" << m << "} ";
    o.require(violations == 0, "obstacle invariant at " + std::to_string(sep));
    o.require(bridging == 0, "no bridging faces at " + std::to_string(sep));
    o.require(std::abs(m - sep) <= 1.0, "mean within 1 nm at " + std::to_string(sep));
  }
  const double t = total.seconds();
  o.detail << "time=" << t << "s ";
  o.require(t < 180.0, "runtime < 3 min");
}

// 3
void normal_orientation(Outcome& o) {
  set_num_threads(8);
  struct Shape {
    const char* name;
    PointCloud truth;
  };
  const std::vector<Shape> shapes = {{"sphere", phantom::fibonacci_sphere(20000, 20.0)},
                                     {"cylinder", phantom::cylinder_cloud(200, 100, 10.0, 60.0)},
                                     {"torus", phantom::torus_cloud(250, 80, 20.0, 6.0)},
                                     {"hemisphere", phantom::fibonacci_hemisphere(20000, 20.0)}};
  for (const auto& s : shapes) {
    const OrientParams p;
    PointCloud in;
    in.points = s.truth.points;
    Stopwatch sw;
    in = estimate_normals_jet(in, p.k_neighbors);
    phantom::randomize_signs(in, 2024);
    const OrientationGraph og = build_orientation_graph(in, p);
    OrientStats st;
    PointCloud out = orient_normals_graph(in, og, p, &st);
    out = smooth_normals_geodesic(out, og, p);
    const double t = sw.seconds();
    const double consistency = edge_consistency(out.normals, og);
    // one global sign per component relative to the exact normals
    std::vector<int> pos(std::size_t(st.components), 0), neg(std::size_t(st.components), 0);
    for (std::size_t i = 0; i < out.size(); ++i)
      (out.normals[i].dot(s.truth.normals[i]) > 0 ? pos : neg)[std::size_t(og.component[i])]++;
    bool single = true;
    for (int k = 0; k < st.components; ++k) single &= pos[std::size_t(k)] == 0 || neg[std::size_t(k)] == 0;
    o.detail << s.name << ":{n=" << in.size() << ", components=" << st.components << ", consistency=" << consistency
             << ", single_sign=" << single << ", time=" << t << "s} ";
    o.require(in.size() >= 10000 && in.size() <= 50000, std::string(s.name) + " size");
    o.require(consistency == 1.0, std::string(s.name) + " edge consistency");
    o.require(single, std::string(s.name) + " global sign");
    o.require(t < 30.0, std::string(s.name) + " runtime");
  }
}

// 4
void curvature_accuracy(Outcome& o) {
  const CurvatureParams p;
  {
    TriangleMesh m = phantom::icosphere(20.0, 4);
    const CurvatureReport r = curvature_monge(m, p);
    double worst_h = 0.0, worst_k = 0.0;
    for (std::size_t v = 0; v < m.num_vertices(); ++v) {
      worst_h = std::max(worst_h, std::isfinite(r.H[v]) ? std::abs(r.H[v] - 0.05) / 0.05 : INFINITY);
      worst_k = std::max(worst_k, std::isfinite(r.K[v]) ? std::abs(r.K[v] - 0.0025) / 0.0025 : INFINITY);
    }
    for (auto& n : m.normals) n = -n;
    const CurvatureReport f = curvature_monge(m, p);
    bool exact = true;
    for (std::size_t v = 0; v < m.num_vertices(); ++v) exact &= f.H[v] == -r.H[v] && f.K[v] == r.K[v];
    o.detail << "sphere:{max_rel_err_H=" << worst_h << ", max_rel_err_K=" << worst_k << ", flip_exact=" << exact << "} ";
    o.require(worst_h <= 0.05, "sphere H within 5%");
    o.require(worst_k <= 0.10, "sphere K within 10%");
    o.require(exact, "sphere flip negates H and keeps K");
  }
  {
    TriangleMesh m = phantom::cylinder_mesh(10.0, 80.0, 64, 60);
    const CurvatureReport r = curvature_monge(m, p);
    // vertices farther than the largest fitting radius from either rim
    const double keep = 40.0 - p.radii_nm.back();
    double worst_h = 0.0, worst_k = 0.0;
    int n = 0;
    for (std::size_t v = 0; v < m.num_vertices(); ++v) {
      if (std::abs(m.vertices[v].z()) > keep) continue;
      ++n;
      worst_h = std::max(worst_h, std::isfinite(r.H[v]) ? std::abs(r.H[v] - 0.05) / 0.05 : INFINITY);
      worst_k = std::max(worst_k, std::isfinite(r.K[v]) ? std::abs(r.K[v]) : INFINITY);
    }
    for (auto& nn : m.normals) nn = -nn;
    const CurvatureReport f = curvature_monge(m, p);
    bool exact = true;
    for (std::size_t v = 0; v < m.num_vertices(); ++v)
      exact &= (std::isnan(r.H[v]) && std::isnan(f.H[v])) || (f.H[v] == -r.H[v] && f.K[v] == r.K[v]);
    o.detail << "cylinder:{vertices=" << n << ", max_rel_err_H=" << worst_h << ", max_abs_K=" << worst_k
             << ", flip_exact=" << exact << "} ";
    o.require(n > 0 && worst_h <= 0.05, "cylinder H within 5%");
    o.require(worst_k <= 1e-4, "cylinder |K| <= 1e-4");
    o.require(exact, "cylinder flip negates H and keeps K");
  }
  {
    const TriangleMesh m = phantom::plane_mesh(40, 40, 1.0);
    const CurvatureReport r = curvature_monge(m, p);
    double worst = 0.0;
    int finite = 0;
    for (double h : r.H)
      if (std::isfinite(h)) {
        ++finite;
        worst = std::max(worst, std::abs(h));
      }
    o.detail << "plane:{finite=" << finite << ", max_abs_H=" << worst << "} ";
    o.require(finite > 0 && worst < 1e-3, "plane |H| < 1e-3");
  }
}

// 5
void stability_selection(Outcome& o) {
  CurvatureParams p;
  p.radii_nm = {5.0, 10.0, 15.0};
  p.delta_rel = 0.05;
  const auto [r1, i1] = select_stable_radius({0.051, 0.050, 0.050}, p);
  const auto [r2, i2] = select_stable_radius({0.1, 0.2, 0.4}, p);
  const auto [r3, i3] = select_stable_radius({0.01, 0.1, NAN}, p);
  o.detail << "worked_example=" << r1 << " divergent=" << r2 << " divergent_with_nan=" << r3 << " ";
  o.require(r1 == 10.0 && i1 == 1, "worked example selects 10");
  o.require(r2 == 15.0 && i2 == 2, "divergent falls back to 15");
  o.require(r3 == 10.0 && i3 == 1, "divergent falls back to the largest finite radius");
}

// 6
void partition_correctness(Outcome& o) {
  const GridGeometry g = phantom::cube_grid(48);
  const Vec3 c = phantom::grid_center(g);
  {
    const ScalarField sdf = signed_distance_field(phantom::sphere_shell(g, c, 15.0, 6.0));
    TriangleMesh iso = marching_cubes(sdf, 0.0);
    iso.normals = compute_vertex_normals(iso);
    const LeafletPair lp = split_isosurface(iso, phantom::icosphere(15.0, 3, c), &sdf);
    const auto parts = split_components(iso);
    bool exact = parts.size() == 2 && lp.method == PartitionMethod::Connectivity;
    if (exact) {
      const bool first_inner = mean_radius(parts[0], c) < mean_radius(parts[1], c);
      auto same = [](const TriangleMesh& a, const TriangleMesh& b) {
        std::multiset<FaceKey> x, y;
        for (const Face& f : a.faces) x.insert(face_key(a, f));
        for (const Face& f : b.faces) y.insert(face_key(b, f));
        return x == y;
      };
      exact = same(lp.inner, parts[first_inner ? 0 : 1]) && same(lp.outer, parts[first_inner ? 1 : 0]);
    }
    o.detail << "concentric:{connectivity_exact=" << exact << "} ";
    o.require(exact, "concentric shell split into its exact components");
  }
  {
    const ScalarField sdf = signed_distance_field(phantom::hemisphere_shell(g, c, 15.0, 4.0));
    const TriangleMesh iso = marching_cubes(sdf, 0.0);
    const TriangleMesh sphere = phantom::icosphere(15.0, 4, c);
    std::vector<int> upper;
    for (int f = 0; f < int(sphere.num_faces()); ++f) {
      double z = 0.0;
      for (int v : sphere.faces[std::size_t(f)]) z += sphere.vertices[std::size_t(v)].z();
      if (z / 3.0 >= c.z() - 3.0) upper.push_back(f);
    }
    try {
      const LeafletPair lp = split_isosurface(iso, extract_faces(sphere, upper), &sdf);
      const double ri = mean_radius(lp.inner, c), ro = mean_radius(lp.outer, c);
      o.detail << "hemisphere:{method=" << (lp.method == PartitionMethod::ProxySplit ? "proxy" : "connectivity")
               << ", inner=" << ri << ", outer=" << ro << ", mid=" << 0.5 * (ri + ro) << "} ";
      o.require(lp.method == PartitionMethod::ProxySplit, "hemisphere uses the proxy split");
      o.require(ri < ro, "inner mean radius < outer");
      o.require(std::abs(0.5 * (ri + ro) - 15.0) <= g.min_spacing(), "midpoint within 1 voxel of 15");
    } catch (const std::exception& e) {
      o.require(false, std::string("hemisphere split threw: ") + e.what());
    }
  }
}

// 7
void oracle_suite(Outcome& o) {
  std::mt19937_64 rng(77);
  {
    std::uniform_int_distribution<int> dim(1, 16);
    std::size_t checked = 0, bad = 0;
    for (int trial = 0; trial < 60; ++trial) {
      const Vec3i dims = trial == 0 ? Vec3i(16, 16, 16) : Vec3i(dim(rng), dim(rng), dim(rng));
      const VoxelGrid m = random_mask(rng, dims, 0.1 + 0.8 * (trial % 7) / 6.0);
      const ScalarField d = distance_to_foreground(m);
      const auto ref = brute_force_distance_to(m, true);
      for (std::size_t i = 0; i < ref.size(); ++i, ++checked)
        bad += std::isinf(ref[i]) ? !std::isinf(d.values[i]) : std::abs(d.values[i] - ref[i]) > 1e-12 * (1.0 + ref[i]);
    }
    o.detail << "edt:{voxels=" << checked << ", mismatches=" << bad << "} ";
    o.require(bad == 0, "EDT equals brute force");
  }
  {
    double worst = 0.0;
    std::uniform_real_distribution<double> u(-12.0, 12.0);
    for (int faces : {10, 100, 250, 500}) {
      const TriangleMesh soup = random_soup(rng, faces, Vec3::Constant(-10), Vec3::Constant(10), 2.0);
      std::vector<Vec3> q(400);
      for (auto& p : q) p = Vec3(u(rng), u(rng), u(rng));
      const DistanceReport rep = point_to_mesh_distance(q, soup);
      for (std::size_t i = 0; i < q.size(); ++i) {
        double ref = INFINITY;
        for (const Face& f : soup.faces)
          ref = std::min(ref, (reference_closest(q[i], soup.vertices[std::size_t(f[0])], soup.vertices[std::size_t(f[1])],
                                                 soup.vertices[std::size_t(f[2])]) - q[i]).norm());
        worst = std::max(worst, std::abs(rep.distance[i] - ref));
      }
    }
    o.detail << "point_to_mesh:{max_err=" << worst << "} ";
    o.require(worst <= 1e-9, "point-to-mesh within 1e-9 nm");
  }
  {
    const TriangleMesh sphere = phantom::icosphere(10.0, 4);
    const double rm = rank_correlation(heat_geodesics(sphere, {0}).distance, dijkstra(sphere, {0}));
    const PointGraph graph = knn_graph(phantom::cylinder_cloud(60, 40, 8.0, 40.0).points, 10);
    const double rg = rank_correlation(heat_geodesics(graph, {0}).distance, dijkstra(graph, {0}));
    o.detail << "heat:{mesh_rho=" << rm << ", graph_rho=" << rg << "} ";
    o.require(rm >= 0.99 && rg >= 0.99, "heat vs Dijkstra rank correlation >= 0.99");
  }
  {
    int mismatched = 0, faces = 0;
    for (int n : {12, 20, 26, 32}) {
      const VoxelGrid support = random_mask(rng, Vec3i(n, n, n), 0.04);
      TriangleMesh mesh;
      std::uniform_real_distribution<double> u(0.0, n - 1.0), j(-0.4, 0.4);
      const Vec3 lo = Vec3::Zero(), hi = Vec3::Constant(n - 1);
      for (int strip = 0; strip < 40; ++strip) {
        const Vec3 s(u(rng), u(rng), u(rng));
        const Vec3 dir = Vec3(j(rng), j(rng), j(rng)).normalized() * 1.2;
        const int base = int(mesh.vertices.size());
        for (int k = 0; k < 6; ++k) {
          mesh.vertices.push_back((s + k * dir).cwiseMax(lo).cwiseMin(hi));
          mesh.vertices.push_back((s + k * dir + Vec3(j(rng), j(rng), 1.0)).cwiseMax(lo).cwiseMin(hi));
        }
        for (int k = 0; k < 5; ++k) {
          mesh.faces.push_back({base + 2 * k, base + 2 * k + 2, base + 2 * k + 1});
          mesh.faces.push_back({base + 2 * k + 1, base + 2 * k + 2, base + 2 * k + 3});
        }
      }
      MeshParams p;
      p.gap_dist_nm = 1.5;
      const TriangleMesh out = gap_filter(mesh, support, p);
      std::multiset<FaceKey> got;
      for (const Face& f : out.faces) got.insert(face_key(out, f));
      const auto expected = reference_gap_filter(mesh, support, 1.5);
      mismatched += got != expected;
      faces += int(mesh.num_faces());
    }
    o.detail << "gap_filter:{faces=" << faces << ", mismatched_grids=" << mismatched << "} ";
    o.require(mismatched == 0, "gap filter equals brute-force SAT overlap");
  }
}

// 8
void roi_postprocessing(Outcome& o) {
  const GridGeometry g = phantom::cube_grid(48);
  const Vec3 c = phantom::grid_center(g);
  VoxelGrid m = phantom::ball(g, c - Vec3(7.5, 0, 0), 12.0);
  const VoxelGrid other = phantom::ball(g, c + Vec3(7.5, 0, 0), 12.0);
  for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] |= other.labels[i];
  const WatershedResult ws = watershed_split(m, {});
  const std::uint32_t left = ws.labels.label_at(c - Vec3(7.5, 0, 0));
  double worst = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    const std::uint32_t l = ws.labels.labels[std::size_t(i)];
    if (!l) continue;
    const double x = g.world(g.unravel(i)).x() - c.x();
    if ((x < 0) != (l == left)) worst = std::max(worst, std::abs(x));
  }
  o.detail << "labels=" << ws.num_labels << " max_misplaced_offset=" << worst << " ";
  o.require(ws.num_labels == 2, "two labels");
  o.require(worst <= g.min_spacing(), "split within 1 voxel of the neck plane");

  std::mt19937_64 rng(99);
  double worst_identity = 0.0;
  for (int t = 0; t < 100; ++t) {
    const VoxelGrid a = random_mask(rng, Vec3i(10, 10, 10), 0.3), b = random_mask(rng, Vec3i(10, 10, 10), 0.3);
    const OverlapScores s = dice_iou(a, b);
    worst_identity = std::max(worst_identity, std::abs(s.dice - 2.0 * s.iou / (1.0 + s.iou)));
  }
  o.detail << "dice_identity_max_err=" << worst_identity << " ";
  o.require(worst_identity <= 1e-12, "dice = 2 iou / (1 + iou)");
}

// 9
void determinism_and_scale(Outcome& o) {
  const auto root = scratch_dir("accept_mcs");
  const GridGeometry g = phantom::cube_grid(256, 1.0);
  const auto ph = phantom::mcs(g, 20.0, 4.0, 80.0, 0.6, 100.0);
  write_volume((root / "membrane.mrc").string(), ph.membrane);
  write_volume((root / "roi.mrc").string(), ph.rois);
  std::vector<std::map<std::string, std::string>> runs;
  for (const auto& [name, threads] : std::vector<std::pair<std::string, int>>{{"a", 8}, {"b", 8}, {"c", 1}}) {
    const PipelineConfig cfg = parse_config(json{{"schema_version", 1},
                                                 {"threads", threads},
                                                 {"rng_seed", 7},
                                                 {"output_dir", (root / name).string()},
                                                 {"inputs",
                                                  {{"membrane", (root / "membrane.mrc").string()},
                                                   {"roi", (root / "roi.mrc").string()}}}});
    Stopwatch sw;
    const RunReport rep = run_pipeline(cfg);
    const double t = sw.seconds();
    o.detail << "run_" << name << "(threads=" << threads << "):{ok=" << rep.ok << ", time=" << t << "s} ";
    o.require(rep.ok, "run " + name + " succeeds" + (rep.ok ? "" : ": " + rep.error));
    o.require(t < 300.0, "run " + name + " < 5 min");
    runs.push_back(digests(root / name));
  }
  o.detail << "artifacts=" << runs[0].size() << " ";
  o.require(runs[0].size() >= 15, "all artifacts written");
  o.require(runs[0] == runs[1], "identical outputs across repeated 8-thread runs");
  o.require(runs[0] == runs[2], "identical outputs at 1 and 8 threads");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"medial fidelity", medial_fidelity},
      {"gap preservation end-to-end", gap_preservation},
      {"normal orientation", normal_orientation},
      {"curvature accuracy and convention", curvature_accuracy},
      {"stability selection", stability_selection},
      {"partition correctness", partition_correctness},
      {"oracle equivalence suite", oracle_suite},
      {"ROI post-processing", roi_postprocessing},
      {"determinism and scale", determinism_and_scale}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::printf("criterion %zu (%s): %s  %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
