#include "surfora/pipeline.hpp"

#include "surfora/mesh_io.hpp"
#include "surfora/parallel.hpp"
#include "surfora/partition.hpp"
#include "surfora/volume_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace surfora {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> s{"roi-post", "medial", "iso",      "orient",   "mesh",
                                          "proxy",    "split",  "distance", "curvature"};
  return s;
}

void RoiPostParams::validate() const {
  if (open_close_radius_vox < 0) throw std::invalid_argument("roi_post.open_close_radius_vox must be >= 0");
  connectivity_from_int(connectivity);
  if (!(watershed_min_seed_dist_nm > 0.0)) throw std::invalid_argument("roi_post.watershed_min_seed_dist must be > 0");
  if (min_component_voxels < 0) throw std::invalid_argument("roi_post.min_component_voxels must be >= 0");
  if (!(crop_margin_nm >= 0.0)) throw std::invalid_argument("roi_post.crop_margin must be >= 0");
}

void IsoParams::validate() const {
  flow.validate();
  if (!(flip_eps_nm > 0.0)) throw std::invalid_argument("iso.flip_eps must be > 0");
}

void DistanceParams::validate() const {
  if (source_label < 1 || target_label < 1) throw std::invalid_argument("distance labels must be >= 1");
  if (source_label == target_label) throw std::invalid_argument("distance source and target labels must differ");
}

void CurvatureStageParams::validate() const {
  params.validate();
  static const std::set<std::string> inputs{"medial_mesh", "inner", "outer", "iso"};
  if (!inputs.count(input)) throw std::invalid_argument("curvature.input must be medial_mesh, inner, outer or iso");
}

void PipelineConfig::validate() const {
  if (schema_version != kSchemaVersion) throw std::invalid_argument("unsupported schema_version");
  if (!(voxel_size_nm > 0.0)) throw std::invalid_argument("voxel_size_nm must be > 0");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (output_dir.empty()) throw std::invalid_argument("output_dir is empty");
  for (const auto& s : stages)
    if (std::find(all_stages().begin(), all_stages().end(), s) == all_stages().end())
      throw std::invalid_argument("unknown stage '" + s + "'");
  auto has = [&](const char* s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  if (has("roi-post")) {
    roi_post.validate();
    if (membrane.empty()) throw std::invalid_argument("roi-post requires inputs.membrane");
  }
  if (has("medial")) medial.resolved(voxel_size_nm).validate();
  if (has("iso")) iso.validate();
  if (has("orient")) orient.validate();
  if (has("mesh") || has("proxy")) mesh.validate();
  if (has("distance")) {
    distance.validate();
    if (distance_source.empty() != distance_target.empty())
      throw std::invalid_argument("inputs.distance_source and inputs.distance_target must be given together");
  }
  if (has("curvature")) curvature.validate();
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

double parse_length(const json& v, double voxel_nm) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ConfigError("length must be a number or a string");
  std::string s = v.get<std::string>();
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  double scale = 1.0;
  auto ends_with = [&](const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with("vox")) {
    scale = voxel_nm;
    s.resize(s.size() - 3);
  } else if (ends_with("nm")) {
    s.resize(s.size() - 2);
  }
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("cannot parse length '" + v.get<std::string>() + "'");
  return x * scale;
}

namespace {

class Block {
 public:
  Block(const json& doc, const std::string& name) : name_(name) {
    if (doc.contains(name)) {
      if (!doc.at(name).is_object()) throw ConfigError("'" + name + "' must be an object");
      obj_ = doc.at(name);
    }
  }
  ~Block() = default;

  template <typename T>
  void get(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name_ + "." + key + ": wrong type");
    }
  }
  void length(const char* key, double& out, double voxel) {
    if (!take(key)) return;
    try {
      out = parse_length(obj_.at(key), voxel);
    } catch (const ConfigError& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }
  bool take(const char* key) {
    if (!obj_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }
  const json& at(const char* key) const { return obj_.at(key); }
  void finish() const {
    for (const auto& [k, _] : obj_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
  }

 private:
  std::string name_;
  json obj_ = json::object();
  std::set<std::string> seen_;
};

}  // namespace

PipelineConfig parse_config(const json& doc, double voxel_nm) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> top{"schema_version", "voxel_size_nm", "inputs",  "stages",   "output_dir",
                                         "rng_seed",       "threads",       "roi_post", "medial",  "iso",
                                         "orient",         "mesh",          "distance", "curvature"};
  for (const auto& [k, _] : doc.items())
    if (!top.count(k)) throw ConfigError("unknown key '" + k + "'");

  PipelineConfig c;
  if (!doc.contains("schema_version")) throw ConfigError("missing schema_version");
  try {
    c.schema_version = doc.at("schema_version").get<int>();
    if (doc.contains("voxel_size_nm")) voxel_nm = doc.at("voxel_size_nm").get<double>();
    c.voxel_size_nm = voxel_nm;
    if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    if (doc.contains("rng_seed")) c.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    if (doc.contains("threads")) c.threads = doc.at("threads").get<int>();
    if (doc.contains("stages")) {
      const json& s = doc.at("stages");
      std::set<std::string> want;
      if (s.is_string()) {
        if (s.get<std::string>() != "all") want.insert(s.get<std::string>());
        else want.insert(all_stages().begin(), all_stages().end());
      } else {
        for (const auto& x : s) want.insert(x.get<std::string>());
      }
      for (const auto& w : want)
        if (std::find(all_stages().begin(), all_stages().end(), w) == all_stages().end())
          throw ConfigError("unknown stage '" + w + "'");
      for (const auto& st : all_stages())
        if (want.count(st)) c.stages.push_back(st);
    } else {
      c.stages = all_stages();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
  const double vox = c.voxel_size_nm;

  Block in(doc, "inputs");
  in.get("membrane", c.membrane);
  in.get("roi", c.roi);
  in.get("medial_mesh", c.medial_mesh_input);
  in.get("distance_source", c.distance_source);
  in.get("distance_target", c.distance_target);
  in.finish();

  Block rp(doc, "roi_post");
  rp.get("open_close_radius_vox", c.roi_post.open_close_radius_vox);
  rp.get("connectivity", c.roi_post.connectivity);
  rp.get("watershed", c.roi_post.watershed);
  rp.length("watershed_min_seed_dist", c.roi_post.watershed_min_seed_dist_nm, vox);
  rp.get("min_component_voxels", c.roi_post.min_component_voxels);
  rp.length("crop_margin", c.roi_post.crop_margin_nm, vox);
  rp.finish();

  Block md(doc, "medial");
  md.get("k_neighbors", c.medial.k_neighbors);
  md.get("mls_iterations", c.medial.mls_iterations);
  md.length("spacing_min", c.medial.spacing_min_nm, vox);
  md.length("spacing_max", c.medial.spacing_max_nm, vox);
  md.get("thickness_factor", c.medial.thickness_factor);
  md.get("min_component_size", c.medial.min_component_size);
  md.get("curvature_spacing_factor", c.medial.curvature_spacing_factor);
  md.get("mls_radius_factor", c.medial.mls_radius_factor);
  md.finish();
  c.medial.rng_seed = c.rng_seed;

  Block is(doc, "iso");
  is.length("gaussian_sigma", c.iso.flow.gaussian_sigma_nm, vox);
  is.get("steps", c.iso.flow.steps);
  is.get("dt", c.iso.flow.dt);
  is.get("upsample_factor", c.iso.flow.upsample_factor);
  is.length("grad_epsilon", c.iso.flow.grad_epsilon, vox);
  is.get("curvature_flow", c.iso.curvature_flow);
  is.length("flip_eps", c.iso.flip_eps_nm, vox);
  is.finish();

  Block on(doc, "orient");
  on.get("k_neighbors", c.orient.k_neighbors);
  on.get("tau", c.orient.tau);
  on.get("alpha_edge", c.orient.alpha_edge);
  on.get("alpha_smooth", c.orient.alpha_smooth);
  on.get("voting_iterations", c.orient.voting_iterations);
  on.get("heat_time_factor", c.orient.heat_time_factor);
  on.get("seed_vertex", c.orient.seed_vertex);
  on.get("smoothing_iterations", c.orient.smoothing_iterations);
  on.finish();

  Block ms(doc, "mesh");
  if (ms.take("radii")) {
    const json& r = ms.at("radii");
    if (r.is_string() && r.get<std::string>() == "auto") {
      c.mesh.radii_nm.clear();
    } else if (r.is_array()) {
      c.mesh.radii_nm.clear();
      for (const auto& x : r) c.mesh.radii_nm.push_back(parse_length(x, vox));
    } else {
      throw ConfigError("mesh.radii must be \"auto\" or a list of lengths");
    }
  }
  ms.get("radius_multipliers", c.mesh.radius_multipliers);
  ms.length("gap_dist", c.mesh.gap_dist_nm, vox);
  ms.length("sat_tolerance", c.mesh.sat_tolerance_nm, vox);
  ms.get("poisson_depth", c.mesh.poisson_depth);
  ms.get("density_trim_quantile", c.mesh.density_trim_quantile);
  ms.get("smooth_lambda", c.mesh.smooth_lambda);
  ms.get("smooth_iterations", c.mesh.smooth_iterations);
  ms.finish();

  Block ds(doc, "distance");
  ds.get("source_label", c.distance.source_label);
  ds.get("target_label", c.distance.target_label);
  ds.finish();

  c.curvature.params = CurvatureParams::for_voxel(vox);
  Block cv(doc, "curvature");
  if (cv.take("radii")) {
    const json& r = cv.at("radii");
    if (!r.is_array()) throw ConfigError("curvature.radii must be a list of lengths");
    c.curvature.params.radii_nm.clear();
    for (const auto& x : r) c.curvature.params.radii_nm.push_back(parse_length(x, vox));
  }
  cv.get("delta_rel", c.curvature.params.delta_rel);
  cv.get("delta_abs", c.curvature.params.delta_abs);
  cv.get("epsilon", c.curvature.params.epsilon);
  cv.get("min_neighbors", c.curvature.params.min_neighbors);
  cv.get("heat_time_factor", c.curvature.params.heat_time_factor);
  cv.get("input", c.curvature.input);
  cv.finish();

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["voxel_size_nm"] = c.voxel_size_nm;
  j["inputs"] = {{"membrane", c.membrane},
                 {"roi", c.roi},
                 {"medial_mesh", c.medial_mesh_input},
                 {"distance_source", c.distance_source},
                 {"distance_target", c.distance_target}};
  j["stages"] = c.stages;
  j["output_dir"] = c.output_dir;
  j["rng_seed"] = c.rng_seed;
  j["threads"] = c.threads;
  j["roi_post"] = {{"open_close_radius_vox", c.roi_post.open_close_radius_vox},
                   {"connectivity", c.roi_post.connectivity},
                   {"watershed", c.roi_post.watershed},
                   {"watershed_min_seed_dist", c.roi_post.watershed_min_seed_dist_nm},
                   {"min_component_voxels", c.roi_post.min_component_voxels},
                   {"crop_margin", c.roi_post.crop_margin_nm}};
  const MedialParams m = c.medial.resolved(c.voxel_size_nm);
  j["medial"] = {{"k_neighbors", m.k_neighbors},
                 {"mls_iterations", m.mls_iterations},
                 {"spacing_min", m.spacing_min_nm},
                 {"spacing_max", m.spacing_max_nm},
                 {"thickness_factor", m.thickness_factor},
                 {"min_component_size", m.min_component_size},
                 {"curvature_spacing_factor", m.curvature_spacing_factor},
                 {"mls_radius_factor", m.mls_radius_factor}};
  j["iso"] = {{"gaussian_sigma", c.iso.flow.gaussian_sigma_nm},
              {"steps", c.iso.flow.steps},
              {"dt", c.iso.flow.dt},
              {"upsample_factor", c.iso.flow.upsample_factor},
              {"grad_epsilon", c.iso.flow.grad_epsilon},
              {"curvature_flow", c.iso.curvature_flow},
              {"flip_eps", c.iso.flip_eps_nm}};
  j["orient"] = {{"k_neighbors", c.orient.k_neighbors},
                 {"tau", c.orient.tau},
                 {"alpha_edge", c.orient.alpha_edge},
                 {"alpha_smooth", c.orient.alpha_smooth},
                 {"voting_iterations", c.orient.voting_iterations},
                 {"heat_time_factor", c.orient.heat_time_factor},
                 {"seed_vertex", c.orient.seed_vertex},
                 {"smoothing_iterations", c.orient.smoothing_iterations}};
  json radii = c.mesh.radii_nm.empty() ? json("auto") : json(c.mesh.radii_nm);
  j["mesh"] = {{"radii", radii},
               {"radius_multipliers", c.mesh.radius_multipliers},
               {"gap_dist", c.mesh.gap_dist_nm},
               {"sat_tolerance", c.mesh.sat_tolerance_nm},
               {"poisson_depth", c.mesh.poisson_depth},
               {"density_trim_quantile", c.mesh.density_trim_quantile},
               {"smooth_lambda", c.mesh.smooth_lambda},
               {"smooth_iterations", c.mesh.smooth_iterations}};
  j["distance"] = {{"source_label", c.distance.source_label}, {"target_label", c.distance.target_label}};
  j["curvature"] = {{"radii", c.curvature.params.radii_nm},
                    {"delta_rel", c.curvature.params.delta_rel},
                    {"delta_abs", c.curvature.params.delta_abs},
                    {"epsilon", c.curvature.params.epsilon},
                    {"min_neighbors", c.curvature.params.min_neighbors},
                    {"heat_time_factor", c.curvature.params.heat_time_factor},
                    {"input", c.curvature.input}};
  return j;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
  }
  (*node)[parts.back()] = value;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= std::uint8_t(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

json RunReport::to_json() const {
  json j;
  j["ok"] = ok;
  j["failed_stage"] = failed_stage;
  j["error"] = error;
  j["params"] = params;
  j["stages"] = json::array();
  json warnings = json::array();
  for (const auto& s : stages) {
    json sj = {{"name", s.name},       {"status", s.status},   {"seconds", s.seconds},
               {"inputs", s.inputs},   {"outputs", s.outputs}, {"summary", s.summary},
               {"warnings", s.warnings}, {"error", s.error}};
    j["stages"].push_back(sj);
    for (const auto& w : s.warnings) warnings.push_back(s.name + ": " + w);
  }
  j["warnings"] = warnings;
  return j;
}

json distance_stats_json(const DistanceReport& r) {
  return {{"source", r.source}, {"target", r.target}, {"count", r.distance.size()}, {"mean", r.mean},
          {"std", r.stddev},    {"min", r.min},       {"max", r.max}};
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

[[noreturn]] void incompatible(const char* what, const std::string& format) {
  throw std::invalid_argument(std::string("incompatible artifact/format: ") + what + " -> " + format);
}

}  // namespace

void export_artifact(const Artifact& artifact, const std::string& format, const std::string& path) {
  if (const auto* v = std::get_if<VoxelGrid>(&artifact)) {
    if (format != "mrc") incompatible("voxel grid", format);
    write_mrc_labels(path, *v);
  } else if (const auto* f = std::get_if<ScalarField>(&artifact)) {
    if (format != "mrc") incompatible("scalar field", format);
    write_mrc_field(path, *f);
  } else if (const auto* c = std::get_if<PointCloud>(&artifact)) {
    if (format == "ply") write_ply(path, *c);
    else if (format == "xyz") write_xyz(path, *c);
    else incompatible("point cloud", format);
  } else if (const auto* m = std::get_if<TriangleMesh>(&artifact)) {
    if (format == "ply") write_ply(path, *m);
    else if (format == "obj") write_obj(path, *m);
    else incompatible("mesh", format);
  } else {
    const auto& r = std::get<DistanceReport>(artifact);
    if (format == "json") {
      write_text(path, distance_stats_json(r).dump(2) + "\n");
    } else if (format == "csv") {
      const bool xyz = r.queries.size() == r.distance.size();
      std::string csv = xyz ? "vertex_id,x,y,z,d\n" : "vertex_id,d\n";
      for (std::size_t i = 0; i < r.distance.size(); ++i) {
        csv += std::to_string(i) + ",";
        if (xyz) csv += fmt(r.queries[i].x()) + "," + fmt(r.queries[i].y()) + "," + fmt(r.queries[i].z()) + ",";
        csv += fmt(r.distance[i]) + "\n";
      }
      write_text(path, csv);
    } else {
      incompatible("distance report", format);
    }
  }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

struct Context {
  const PipelineConfig& cfg;
  fs::path dir;
  StageReport* stage = nullptr;

  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string input(const std::string& p) const {
    if (!fs::exists(p)) throw std::runtime_error("missing input '" + p + "'");
    stage->inputs[fs::path(p).filename().string()] = file_digest(p);
    return p;
  }
  std::string artifact(const std::string& name) const { return input(path(name)); }
  void wrote(const std::string& p) const { stage->outputs[fs::path(p).filename().string()] = file_digest(p); }
  void warn(const std::string& w) const { stage->warnings.push_back(w); }
};

VoxelGrid crop(const VoxelGrid& v, const Vec3i& lo, const Vec3i& hi) {
  GridGeometry g = v.grid;
  g.dims = hi - lo + Vec3i::Ones();
  g.origin = v.grid.world(lo);
  VoxelGrid out(g);
  for (int k = 0; k < g.dims.z(); ++k)
    for (int j = 0; j < g.dims.y(); ++j)
      for (int i = 0; i < g.dims.x(); ++i) out(i, j, k) = v(lo.x() + i, lo.y() + j, lo.z() + k);
  return out;
}

// Crops to the bounding box of voxels with the given label (0: any foreground).
VoxelGrid crop_to_label(const VoxelGrid& v, std::uint32_t label, double margin_nm, bool keep_only_label) {
  Vec3i lo = v.grid.dims, hi = -Vec3i::Ones();
  for (int k = 0; k < v.grid.dims.z(); ++k)
    for (int j = 0; j < v.grid.dims.y(); ++j)
      for (int i = 0; i < v.grid.dims.x(); ++i) {
        const std::uint32_t l = v(i, j, k);
        if (l == 0 || (label && l != label)) continue;
        lo = lo.cwiseMin(Vec3i(i, j, k));
        hi = hi.cwiseMax(Vec3i(i, j, k));
      }
  if (hi.x() < 0) throw std::runtime_error("no foreground voxels for label " + std::to_string(label));
  for (int a = 0; a < 3; ++a) {
    const int m = int(std::ceil(margin_nm / v.grid.spacing[a] - 1e-9));
    lo[a] = std::max(0, lo[a] - m);
    hi[a] = std::min(v.grid.dims[a] - 1, hi[a] + m);
  }
  VoxelGrid out = crop(v, lo, hi);
  if (keep_only_label && label)
    for (auto& l : out.labels) l = l == label ? 1u : 0u;
  return out;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::uint32_t max_label_of(const std::vector<double>& ch) {
  double m = 0.0;
  for (double v : ch)
    if (std::isfinite(v)) m = std::max(m, v);
  return std::uint32_t(std::llround(m));
}

TriangleMesh faces_with_label(const TriangleMesh& mesh, std::uint32_t label) {
  const auto it = mesh.channels.find("label");
  if (it == mesh.channels.end()) throw std::runtime_error("mesh has no label channel");
  std::vector<int> keep;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    bool all = true;
    for (int v : mesh.faces[f]) all = all && std::llround(it->second[std::size_t(v)]) == label;
    if (all) keep.push_back(int(f));
  }
  return extract_faces(mesh, keep);
}

PointCloud read_checked_cloud(const Context& ctx, const std::string& path) {
  PointCloud c = read_cloud(ctx.input(path));
  try {
    c.validate();
  } catch (const std::invalid_argument&) {
    int fixed = 0;
    for (auto& n : c.normals) {
      const double len = n.norm();
      if (std::abs(len - 1.0) > 1e-6) {
        n = len > 0.0 ? Vec3(n / len) : Vec3(Vec3::UnitZ());
        ++fixed;
      }
    }
    ctx.warn("renormalised " + std::to_string(fixed) + " normals in " + fs::path(path).filename().string());
    c.validate();
  }
  return c;
}

void stage_roi_post(const Context& ctx) {
  const PipelineConfig& c = ctx.cfg;
  const VoxelGrid membrane = read_volume(ctx.input(c.membrane));
  VoxelGrid seg = binarize(membrane);
  if (c.roi_post.open_close_radius_vox > 0) seg = binary_open_close(seg, c.roi_post.open_close_radius_vox);
  if (!c.roi.empty()) {
    const VoxelGrid rois = read_volume(ctx.input(c.roi));
    if (!rois.grid.same_frame(membrane.grid)) throw std::runtime_error("roi volume frame differs from membrane");
    seg = binarize(restrict_to_roi(seg, rois));
  }
  LabelMask labels;
  if (c.roi_post.watershed) {
    WatershedParams wp;
    wp.min_seed_dist_nm = c.roi_post.watershed_min_seed_dist_nm;
    wp.connectivity = connectivity_from_int(c.roi_post.connectivity);
    labels = watershed_split(seg, wp).labels;
  } else {
    labels = connected_components(seg, connectivity_from_int(c.roi_post.connectivity));
  }
  std::vector<Index> count(labels.max_label() + 1, 0);
  for (auto l : labels.labels) ++count[l];
  int dropped = 0;
  for (auto& l : labels.labels)
    if (l && count[l] < c.roi_post.min_component_voxels) l = 0;
  for (std::size_t l = 1; l < count.size(); ++l) dropped += count[l] < c.roi_post.min_component_voxels;
  labels = relabel_sequential(labels);
  if (labels.max_label() == 0) throw std::runtime_error("no membrane voxels left after ROI post-processing");
  labels = crop_to_label(labels, 0, c.roi_post.crop_margin_nm, false);

  const std::string out = ctx.path("roi_labels.mrc");
  write_volume(out, labels);
  ctx.wrote(out);
  ctx.stage->summary = {{"labels", labels.max_label()},
                        {"foreground_voxels", labels.count_foreground()},
                        {"dropped_components", dropped},
                        {"dims", {labels.grid.dims.x(), labels.grid.dims.y(), labels.grid.dims.z()}}};
}

void stage_medial(const Context& ctx) {
  const VoxelGrid labels = read_volume(ctx.artifact("roi_labels.mrc"));
  const MedialParams mp = ctx.cfg.medial.resolved(labels.grid.min_spacing());
  PointCloud all;
  json per = json::array();
  for (std::uint32_t l = 1; l <= labels.max_label(); ++l) {
    const VoxelGrid mask = crop_to_label(labels, l, 4.0 * mp.spacing_max_nm, true);
    PointCloud pc = extract_medial_surface(mask, mp);
    pc.attributes.clear();
    pc.normals.clear();
    pc.labels.assign(pc.size(), l);
    per.push_back(pc.size());
    if (pc.empty()) ctx.warn("label " + std::to_string(l) + " produced no medial points");
    all.append(pc);
  }
  if (all.empty()) throw std::runtime_error("medial extraction produced no points");
  const std::string out = ctx.path("medial.ply");
  write_ply(out, all);
  ctx.wrote(out);
  ctx.stage->summary = {{"points", all.size()}, {"points_per_label", per}};
}

void stage_iso(const Context& ctx) {
  const PipelineConfig& c = ctx.cfg;
  const VoxelGrid labels = read_volume(ctx.artifact("roi_labels.mrc"));
  const ScalarField ref = signed_distance_field(binarize(labels), c.iso.flow.upsample_factor);
  FlowParams fp = c.iso.flow;
  fp.upsample_factor = 1;
  const ScalarField phi = c.iso.curvature_flow ? mean_curvature_flow(ref, ref, fp) : ref;
  TriangleMesh iso = marching_cubes(phi, 0.0);
  if (iso.faces.empty()) throw std::runtime_error("isosurface is empty");
  iso.normals = compute_vertex_normals(iso);
  PointCloud samples = mesh_to_cloud(iso);
  int flips = 0, clamped = 0;
  samples = orient_normals_sdf(samples, phi, c.iso.flip_eps_nm, &flips, &clamped);
  iso.normals = samples.normals;
  if (clamped) ctx.warn(std::to_string(clamped) + " normal-flip probes left the field");

  // component label by majority of the voxels just inside each vertex
  int ncomp = 0;
  const auto comp = vertex_components(iso, &ncomp);
  std::vector<std::map<std::uint32_t, int>> votes(static_cast<std::size_t>(ncomp));
  const double step = 0.5 * labels.grid.min_spacing();
  for (std::size_t v = 0; v < iso.num_vertices(); ++v) {
    const std::uint32_t l = labels.label_at(iso.vertices[v] - step * iso.normals[v]);
    if (l) ++votes[std::size_t(comp[v])][l];
  }
  std::vector<double> lab(iso.num_vertices(), 0.0);
  for (std::size_t v = 0; v < lab.size(); ++v) {
    const auto& m = votes[std::size_t(comp[v])];
    std::uint32_t best = 0;
    int bc = -1;
    for (const auto& [l, n] : m)
      if (n > bc) {
        bc = n;
        best = l;
      }
    lab[v] = best;
  }
  iso.channels["label"] = lab;

  const std::string sdf_out = ctx.path("sdf.mrc"), iso_out = ctx.path("iso.ply");
  write_field(sdf_out, phi);
  write_ply(iso_out, iso);
  ctx.wrote(sdf_out);
  ctx.wrote(iso_out);
  ctx.stage->summary = {{"vertices", iso.num_vertices()}, {"faces", iso.num_faces()},
                        {"components", ncomp},           {"normal_flips", flips},
                        {"area_nm2", surface_area(iso)}};
}

void stage_orient(const Context& ctx) {
  const PointCloud cloud = read_checked_cloud(ctx, ctx.path("medial.ply"));
  if (!cloud.has_labels()) throw std::runtime_error("medial cloud has no labels");
  const std::uint32_t L = *std::max_element(cloud.labels.begin(), cloud.labels.end());
  PointCloud all;
  json per = json::array();
  for (std::uint32_t l = 1; l <= L; ++l) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.labels[i] == l) idx.push_back(int(i));
    if (idx.empty()) continue;
    PointCloud part = cloud.subset(idx);
    if (int(part.size()) <= ctx.cfg.orient.k_neighbors) {
      ctx.warn("label " + std::to_string(l) + " has too few points to orient; dropped");
      continue;
    }
    part = estimate_normals_jet(part, ctx.cfg.orient.k_neighbors);
    const OrientationGraph og = build_orientation_graph(part, ctx.cfg.orient);
    OrientStats st;
    part = orient_normals_graph(part, og, ctx.cfg.orient, &st);
    part = smooth_normals_geodesic(part, og, ctx.cfg.orient);
    // one sign convention per component: normals away from the component centroid
    const int nc = int(og.seeds.size());
    std::vector<Vec3> centroid(std::size_t(nc), Vec3::Zero());
    std::vector<int> cnt(std::size_t(nc), 0);
    for (std::size_t i = 0; i < part.size(); ++i) {
      centroid[std::size_t(og.component[i])] += part.points[i];
      ++cnt[std::size_t(og.component[i])];
    }
    std::vector<double> score(std::size_t(nc), 0.0);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const int k = og.component[i];
      score[std::size_t(k)] += part.normals[i].dot(part.points[i] - centroid[std::size_t(k)] / cnt[std::size_t(k)]);
    }
    for (std::size_t i = 0; i < part.size(); ++i)
      if (score[std::size_t(og.component[i])] < 0.0) part.normals[i] = -part.normals[i];
    per.push_back({{"label", l},
                   {"points", part.size()},
                   {"components", st.components},
                   {"edge_consistency", edge_consistency(part.normals, og)},
                   {"tree_flips", st.tree_flips},
                   {"vote_flips", st.vote_flips},
                   {"geodesic_fallback", st.geodesic_fallback}});
    if (st.geodesic_fallback) ctx.warn("label " + std::to_string(l) + ": heat solve failed, Dijkstra used");
    all.append(part);
  }
  if (all.empty()) throw std::runtime_error("no points to orient");
  const std::string out = ctx.path("oriented.ply");
  write_ply(out, all);
  ctx.wrote(out);
  ctx.stage->summary = {{"labels", per}};
}

void stage_mesh(const Context& ctx) {
  const PointCloud cloud = read_checked_cloud(ctx, ctx.path("oriented.ply"));
  const VoxelGrid support = read_volume(ctx.artifact("roi_labels.mrc"));
  BallPivotStats bs;
  TriangleMesh mesh = ball_pivot(cloud, ctx.cfg.mesh, &bs);
  const std::size_t before = mesh.num_faces();
  GapFilterStats gs;
  mesh = gap_filter(mesh, support, ctx.cfg.mesh, &gs);
  mesh = damped_laplacian_smooth(mesh, ctx.cfg.mesh);
  if (mesh.faces.empty()) throw std::runtime_error("no faces left after gap filtering");
  const std::string out = ctx.path("medial_mesh.ply");
  write_ply(out, mesh);
  ctx.wrote(out);
  int ncomp = 0;
  face_components(mesh, &ncomp);
  ctx.stage->summary = {{"radii_nm", bs.radii},
                        {"faces_per_radius", bs.faces_per_radius},
                        {"faces_before_filter", before},
                        {"faces", mesh.num_faces()},
                        {"vertices", mesh.num_vertices()},
                        {"components", ncomp},
                        {"gap_voxels", gs.gap_voxels},
                        {"removed_sat", gs.removed_sat},
                        {"removed_label", gs.removed_label},
                        {"removed_isolated", gs.removed_isolated},
                        {"area_nm2", surface_area(mesh)}};
}

void stage_proxy(const Context& ctx) {
  const TriangleMesh medial = read_mesh(ctx.artifact("medial_mesh.ply"));
  std::vector<TriangleMesh> parts;
  json per = json::array();
  const std::uint32_t L = max_label_of(medial.channels.at("label"));
  for (std::uint32_t l = 1; l <= L; ++l) {
    const TriangleMesh sub = faces_with_label(medial, l);
    if (sub.num_vertices() < 4) continue;
    PoissonStats ps;
    TriangleMesh proxy = poisson_reconstruct(mesh_to_cloud(sub), ctx.cfg.mesh, &ps);
    proxy.channels["label"].assign(proxy.num_vertices(), double(l));
    per.push_back({{"label", l},
                   {"vertices", proxy.num_vertices()},
                   {"faces", proxy.num_faces()},
                   {"cg_iterations", ps.iterations},
                   {"relative_residual", ps.relative_residual},
                   {"trimmed_vertices", ps.trimmed_vertices}});
    parts.push_back(std::move(proxy));
  }
  if (parts.empty()) throw std::runtime_error("no labelled medial mesh to reconstruct");
  const TriangleMesh proxy = merge_meshes(parts);
  const std::string out = ctx.path("proxy.ply");
  write_ply(out, proxy);
  ctx.wrote(out);
  ctx.stage->summary = {{"labels", per}};
}

void stage_split(const Context& ctx) {
  const TriangleMesh iso = read_mesh(ctx.artifact("iso.ply"));
  const TriangleMesh proxy = read_mesh(ctx.artifact("proxy.ply"));
  const ScalarField sdf = read_field(ctx.artifact("sdf.mrc"));
  std::vector<TriangleMesh> inner, outer;
  json per = json::array();
  const std::uint32_t L = max_label_of(iso.channels.at("label"));
  for (std::uint32_t l = 1; l <= L; ++l) {
    const TriangleMesh iso_l = faces_with_label(iso, l);
    const TriangleMesh proxy_l = faces_with_label(proxy, l);
    if (iso_l.faces.empty()) continue;
    if (proxy_l.faces.empty()) {
      ctx.warn("label " + std::to_string(l) + " has no proxy; not split");
      continue;
    }
    const LeafletPair lp = split_isosurface(iso_l, proxy_l, &sdf);
    per.push_back({{"label", l},
                   {"method", to_string(lp.method)},
                   {"inner_components", lp.inner_components},
                   {"outer_components", lp.outer_components},
                   {"cut_faces", lp.cut_faces},
                   {"ambiguous_faces", lp.ambiguous_faces},
                   {"cut_length_nm", lp.cut_length_nm}});
    if (lp.ambiguous_faces) ctx.warn("label " + std::to_string(l) + ": tangential contact resolved by vote");
    inner.push_back(lp.inner);
    outer.push_back(lp.outer);
  }
  if (inner.empty()) throw std::runtime_error("cannot partition: no labelled isosurface with a proxy");
  const std::string in_out = ctx.path("inner.ply"), out_out = ctx.path("outer.ply"), js = ctx.path("split.json");
  write_ply(in_out, merge_meshes(inner));
  write_ply(out_out, merge_meshes(outer));
  write_text(js, json{{"labels", per}}.dump(2) + "\n");
  ctx.wrote(in_out);
  ctx.wrote(out_out);
  ctx.wrote(js);
  ctx.stage->summary = {{"labels", per}};
}

void stage_distance(const Context& ctx) {
  const PipelineConfig& c = ctx.cfg;
  std::vector<Vec3> queries;
  TriangleMesh target;
  std::string src_id, dst_id;
  if (!c.distance_source.empty()) {
    queries = read_cloud(ctx.input(c.distance_source)).points;
    target = read_mesh(ctx.input(c.distance_target));
    src_id = fs::path(c.distance_source).filename().string();
    dst_id = fs::path(c.distance_target).filename().string();
  } else {
    const TriangleMesh medial = read_mesh(ctx.artifact("medial_mesh.ply"));
    const TriangleMesh src = faces_with_label(medial, std::uint32_t(c.distance.source_label));
    target = faces_with_label(medial, std::uint32_t(c.distance.target_label));
    if (src.faces.empty() || target.faces.empty())
      throw std::runtime_error("medial mesh lacks faces for the requested distance labels");
    queries = src.vertices;
    src_id = "medial_mesh.ply#label" + std::to_string(c.distance.source_label);
    dst_id = "medial_mesh.ply#label" + std::to_string(c.distance.target_label);
  }
  DistanceReport rep = point_to_mesh_distance(queries, target);
  rep.source = src_id;
  rep.target = dst_id;
  const std::string csv_out = ctx.path("distance.csv"), js = ctx.path("distance.json");
  export_artifact(rep, "csv", csv_out);
  export_artifact(rep, "json", js);
  ctx.wrote(csv_out);
  ctx.wrote(js);
  ctx.stage->summary = distance_stats_json(rep);
}

void stage_curvature(const Context& ctx) {
  const PipelineConfig& c = ctx.cfg;
  std::string in;
  if (!c.medial_mesh_input.empty()) in = ctx.input(c.medial_mesh_input);
  else if (c.curvature.input == "medial_mesh") in = ctx.artifact("medial_mesh.ply");
  else in = ctx.artifact(c.curvature.input + ".ply");
  TriangleMesh mesh = read_mesh(in);
  const CurvatureReport rep = curvature_monge(mesh, c.curvature.params);
  attach_curvature(mesh, rep);

  std::string csv = "vertex_id,x,y,z,H,K,r_used,confidence\n";
  std::size_t finite = 0, low = 0, boundary = 0;
  double sh = 0.0, sk = 0.0;
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    const Vec3& p = mesh.vertices[v];
    csv += std::to_string(v) + "," + fmt(p.x()) + "," + fmt(p.y()) + "," + fmt(p.z()) + "," + fmt(rep.H[v]) + "," +
           fmt(rep.K[v]) + "," + fmt(rep.r_used[v]) + "," + fmt(rep.confidence[v]) + "\n";
    if (std::isfinite(rep.H[v])) {
      ++finite;
      sh += rep.H[v];
      sk += rep.K[v];
    }
    low += rep.low_confidence[v];
    boundary += rep.boundary_excluded[v];
  }
  std::string fcsv = "face_id,H,K\n";
  const auto fh = vertex_to_face_average(mesh, rep.H), fk = vertex_to_face_average(mesh, rep.K);
  for (std::size_t f = 0; f < fh.size(); ++f) fcsv += std::to_string(f) + "," + fmt(fh[f]) + "," + fmt(fk[f]) + "\n";

  const json stats = {{"input", fs::path(in).filename().string()},
                      {"vertices", mesh.num_vertices()},
                      {"estimated", finite},
                      {"boundary_excluded", boundary},
                      {"low_confidence", low},
                      {"mean_H", finite_or_null(finite ? sh / double(finite) : NAN)},
                      {"mean_K", finite_or_null(finite ? sk / double(finite) : NAN)},
                      {"radii_nm", c.curvature.params.radii_nm}};
  const std::string csv_out = ctx.path("curvature.csv"), fcsv_out = ctx.path("curvature_faces.csv"),
                    ply = ctx.path("curvature.ply"), js = ctx.path("curvature.json");
  write_text(csv_out, csv);
  write_text(fcsv_out, fcsv);
  write_ply(ply, mesh);
  write_text(js, stats.dump(2) + "\n");
  for (const auto& p : {csv_out, fcsv_out, ply, js}) ctx.wrote(p);
  ctx.stage->summary = stats;
}

const std::map<std::string, std::function<void(const Context&)>>& stage_table() {
  static const std::map<std::string, std::function<void(const Context&)>> t{
      {"roi-post", stage_roi_post}, {"medial", stage_medial}, {"iso", stage_iso},
      {"orient", stage_orient},     {"mesh", stage_mesh},     {"proxy", stage_proxy},
      {"split", stage_split},       {"distance", stage_distance}, {"curvature", stage_curvature}};
  return t;
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& config) {
  RunReport report;
  report.params = config_to_json(config);
  const fs::path dir(config.output_dir);
  auto write_report = [&] {
    try {
      write_text((dir / "run_report.json").string(), report.to_json().dump(2) + "\n");
    } catch (...) {
    }
  };
  try {
    config.validate();
    fs::create_directories(dir);
  } catch (const std::exception& e) {
    report.ok = false;
    report.failed_stage = "config";
    report.error = e.what();
    write_report();
    return report;
  }
  set_num_threads(config.threads > 0 ? config.threads : default_num_threads());

  for (const auto& s : all_stages()) {
    if (std::find(config.stages.begin(), config.stages.end(), s) == config.stages.end()) continue;
    report.stages.push_back(StageReport{});
    StageReport& st = report.stages.back();
    st.name = s;
    Context ctx{config, dir, &st};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      stage_table().at(s)(ctx);
      st.status = "ok";
    } catch (const std::exception& e) {
      st.status = "failed";
      st.error = e.what();
      report.ok = false;
      report.failed_stage = s;
      report.error = e.what();
    }
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!report.ok) break;
  }
  write_report();
  return report;
}

}  // namespace surfora
