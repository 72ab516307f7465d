#include "surfora/phantoms.hpp"
#include "surfora/pipeline.hpp"
#include "surfora/volume_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace surfora;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  int threads = -1;
  long long seed = -1;
  double voxel = 0.0;
  std::vector<std::string> overrides;
  // stage inputs
  std::string membrane, roi, mesh, source, target;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "JSON config file");
  app->add_option("-o,--out", c.out, "output directory");
  app->add_option("-t,--threads", c.threads, "thread count (default: SURFORA_THREADS or all cores)");
  app->add_option("--seed", c.seed, "rng seed");
  app->add_option("--voxel", c.voxel, "voxel size in nm used for 'vox' lengths");
  app->add_option("--set", c.overrides, "override a config key, e.g. --set mesh.gap_dist=3nm");
}

json load_config(const Common& c, const std::vector<std::string>& stages) {
  json doc = json::object();
  if (!c.config.empty()) {
    std::ifstream f(c.config);
    if (!f) throw ConfigError("cannot read config '" + c.config + "'");
    try {
      doc = json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid JSON in config: ") + e.what());
    }
  } else {
    doc["schema_version"] = kSchemaVersion;
  }
  if (!stages.empty()) doc["stages"] = stages;
  if (!c.out.empty()) doc["output_dir"] = c.out;
  if (c.threads >= 0) doc["threads"] = c.threads;
  if (c.seed >= 0) doc["rng_seed"] = static_cast<std::uint64_t>(c.seed);
  if (c.voxel > 0.0) doc["voxel_size_nm"] = c.voxel;
  auto input = [&](const char* key, const std::string& v) {
    if (!v.empty()) doc["inputs"][key] = v;
  };
  input("membrane", c.membrane);
  input("roi", c.roi);
  input("medial_mesh", c.mesh);
  input("distance_source", c.source);
  input("distance_target", c.target);
  for (const auto& o : c.overrides) apply_override(doc, o);
  return doc;
}

int run(const Common& c, const std::vector<std::string>& stages) {
  PipelineConfig cfg;
  try {
    cfg = parse_config(load_config(c, stages));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const RunReport rep = run_pipeline(cfg);
  for (const auto& s : rep.stages) {
    std::cout << s.name << ": " << s.status << " (" << s.seconds << " s)\n";
    for (const auto& w : s.warnings) std::cout << "  warning: " << w << "\n";
  }
  if (!rep.ok) {
    std::cerr << "stage '" << rep.failed_stage << "' failed: " << rep.error << "\n";
    return rep.failed_stage == "config" ? 2 : 3;
  }
  return 0;
}

struct PhantomArgs {
  std::string kind = "mcs";
  std::string out = "phantom";
  int n = 128;
  double voxel = 1.0;
  double radius = 20.0;
  double thickness = 4.0;
  double separation = 20.0;
  double half_angle = 0.6;
  double half_length = 40.0;
};

void write_phantom(const PhantomArgs& a) {
  const GridGeometry g = phantom::cube_grid(a.n, a.voxel);
  const Vec3 c = phantom::grid_center(g);
  const std::string base = a.out;
  if (a.kind == "shell") {
    write_volume(base + "_membrane.mrc", phantom::sphere_shell(g, c, a.radius, a.thickness));
  } else if (a.kind == "hemisphere") {
    write_volume(base + "_membrane.mrc", phantom::hemisphere_shell(g, c, a.radius, a.thickness));
  } else if (a.kind == "concentric") {
    VoxelGrid m = phantom::sphere_shell(g, c, a.radius, a.thickness);
    const VoxelGrid o = phantom::sphere_shell(g, c, a.radius + a.separation, a.thickness);
    for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = m.labels[i] | o.labels[i];
    write_volume(base + "_membrane.mrc", m);
  } else if (a.kind == "sheets") {
    write_volume(base + "_membrane.mrc",
                 phantom::two_sheets(g, c, a.separation, a.thickness, 0.35 * a.n * a.voxel));
  } else if (a.kind == "overlap") {
    VoxelGrid m = phantom::ball(g, c - Vec3(0.6 * a.radius, 0, 0), a.radius);
    const VoxelGrid o = phantom::ball(g, c + Vec3(0.6 * a.radius, 0, 0), a.radius);
    for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = m.labels[i] | o.labels[i];
    write_volume(base + "_membrane.mrc", m);
  } else if (a.kind == "mcs") {
    const auto p = phantom::mcs(g, a.separation, a.thickness, a.radius, a.half_angle, a.half_length);
    write_volume(base + "_membrane.mrc", p.membrane);
    write_volume(base + "_roi.mrc", p.rois);
  } else {
    throw std::invalid_argument("unknown phantom kind '" + a.kind + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membrane surface reconstruction and morphometrics"};
  app.require_subcommand(1);

  Common common;
  std::vector<std::pair<CLI::App*, std::string>> stage_cmds;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"roi-post", "denoise, split and crop the membrane segmentation"},
      {"medial", "extract the medial point cloud"},
      {"iso", "smooth isosurface of the membrane"},
      {"orient", "estimate and orient medial normals"},
      {"mesh", "ball-pivoting medial mesh with gap filtering"},
      {"proxy", "Poisson proxy surface per membrane"},
      {"split", "split the isosurface into inner and outer leaflets"},
      {"distance", "inter-membrane distances"},
      {"curvature", "Monge curvature with stable radius selection"}};
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    stage_cmds.emplace_back(sub, name);
  }
  for (auto& [sub, name] : stage_cmds) {
    if (name == "roi-post") {
      sub->add_option("--membrane", common.membrane, "membrane segmentation volume");
      sub->add_option("--roi", common.roi, "ROI label volume");
    } else if (name == "distance") {
      sub->add_option("--source", common.source, "source point cloud or mesh");
      sub->add_option("--target", common.target, "target mesh");
    } else if (name == "curvature") {
      sub->add_option("--mesh", common.mesh, "mesh to analyse");
    }
  }
  CLI::App* all = app.add_subcommand("pipeline", "run the selected stages of the config (default: all)");
  add_common(all, common);
  all->add_option("--membrane", common.membrane, "membrane segmentation volume");
  all->add_option("--roi", common.roi, "ROI label volume");

  PhantomArgs ph;
  CLI::App* phc = app.add_subcommand("phantom", "write a synthetic test volume");
  phc->add_option("kind", ph.kind, "shell | hemisphere | concentric | sheets | overlap | mcs")
      ->check(CLI::IsMember({"shell", "hemisphere", "concentric", "sheets", "overlap", "mcs"}));
  phc->add_option("-o,--out", ph.out, "output prefix");
  phc->add_option("-n,--size", ph.n, "grid size in voxels");
  phc->add_option("--voxel", ph.voxel, "voxel size in nm");
  phc->add_option("--radius", ph.radius, "radius in nm (inner radius for mcs)");
  phc->add_option("--thickness", ph.thickness, "sheet thickness in nm");
  phc->add_option("--separation", ph.separation, "sheet separation in nm");
  phc->add_option("--half-angle", ph.half_angle, "mcs half angle in radians");
  phc->add_option("--half-length", ph.half_length, "mcs half length in nm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (phc->parsed()) {
      write_phantom(ph);
      return 0;
    }
    if (all->parsed()) {
      std::vector<std::string> none;
      if (common.config.empty()) none = all_stages();
      return run(common, none);
    }
    for (auto& [sub, name] : stage_cmds)
      if (sub->parsed()) return run(common, {name});
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
