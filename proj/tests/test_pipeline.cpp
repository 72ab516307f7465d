#include "support.hpp"

#include "surfora/mesh_io.hpp"
#include "surfora/parallel.hpp"
#include "surfora/phantoms.hpp"
#include "surfora/pipeline.hpp"
#include "surfora/volume_io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

using namespace surfora;
using namespace surfora::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> digests(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "run_report.json") out[e.path().filename().string()] = file_digest(e.path().string());
  return out;
}

PipelineConfig sheets_config(const fs::path& dir, const std::string& membrane) {
  json doc = {{"schema_version", 1}, {"output_dir", dir.string()}, {"inputs", {{"membrane", membrane}}}};
  return parse_config(doc);
}

}  // namespace

TEST_CASE("length parsing") {
  CHECK(parse_length(json(2.5), 1.0) == 2.5);
  CHECK(parse_length(json("4nm"), 2.0) == 4.0);
  CHECK(parse_length(json("3vox"), 2.0) == 6.0);
  CHECK(parse_length(json(" 1.5 vox "), 0.8) == doctest::Approx(1.2));
  CHECK_THROWS_AS(parse_length(json("abc"), 1.0), ConfigError);
  CHECK_THROWS_AS(parse_length(json("3 furlongs"), 1.0), ConfigError);
  CHECK_THROWS_AS(parse_length(json::array(), 1.0), ConfigError);
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_WITH_AS(parse_config(json{{"voxel_size_nm", 1.0}}), doctest::Contains("schema_version"), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"schema_version", 2}}), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(json{{"schema_version", 1}, {"colour", "blue"}}), doctest::Contains("colour"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(json{{"schema_version", 1}, {"mesh", {{"gap", 2}}}}), doctest::Contains("mesh.gap"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"schema_version", 1}, {"stages", {"mesh", "polish"}}}), ConfigError);

  const PipelineConfig c = parse_config(json{{"schema_version", 1},
                                              {"voxel_size_nm", 2.0},
                                              {"stages", {"curvature", "mesh"}},
                                              {"mesh", {{"gap_dist", "1.5vox"}, {"radii", {"2nm", 3}}}},
                                              {"curvature", {{"radii", {"2vox", "4vox"}}}}});
  CHECK(c.stages == std::vector<std::string>{"mesh", "curvature"});  // dependency order
  CHECK(c.mesh.gap_dist_nm == 3.0);
  CHECK(c.mesh.radii_nm == std::vector<double>{2.0, 3.0});
  CHECK(c.curvature.params.radii_nm == std::vector<double>{4.0, 8.0});
  CHECK(parse_config(json{{"schema_version", 1}, {"voxel_size_nm", 2.0}, {"inputs", {{"membrane", "m.mrc"}}}}).curvature.params.radii_nm ==
        std::vector<double>{6.0, 12.0, 18.0, 24.0});

  // config round trip through its own echo
  const PipelineConfig again = parse_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
}

TEST_CASE("invalid parameters are rejected before any computation") {
  const auto dir = scratch_dir("failfast");
  const std::vector<std::pair<std::string, json>> bad = {
      {"medial", {{"k_neighbors", 1}}},          {"orient", {{"tau", 2.0}}},
      {"mesh", {{"radii", {3, 2}}}},              {"mesh", {{"smooth_lambda", 1.0}}},
      {"iso", {{"dt", 10.0}}},                    {"curvature", {{"radii", {4, 4}}}},
      {"distance", {{"source_label", 1}, {"target_label", 1}}}, {"roi_post", {{"connectivity", 5}}}};
  for (const auto& [block, value] : bad) {
    CAPTURE(block);
    json doc = {{"schema_version", 1}, {"output_dir", (dir / "x").string()}, {"inputs", {{"membrane", "m.mrc"}}}};
    doc[block] = value;
    bool threw = false;
    try {
      PipelineConfig c = parse_config(doc);
      // dt is checked against the grid at run time; the stage must fail without outputs
      const RunReport r = run_pipeline(c);
      threw = !r.ok;
    } catch (const ConfigError&) {
      threw = true;
    }
    CHECK(threw);
  }
}

TEST_CASE("overrides") {
  json doc = {{"schema_version", 1}, {"inputs", {{"membrane", "m.mrc"}}}};
  apply_override(doc, "mesh.gap_dist=3vox");
  apply_override(doc, "threads=2");
  apply_override(doc, "iso.curvature_flow=false");
  CHECK(doc["mesh"]["gap_dist"] == "3vox");
  CHECK(doc["threads"] == 2);
  CHECK(doc["iso"]["curvature_flow"] == false);
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
  const PipelineConfig c = parse_config(doc, 2.0);
  CHECK(c.mesh.gap_dist_nm == 6.0);
}

TEST_CASE("export rejects incompatible artifact formats") {
  const auto dir = scratch_dir("export");
  VoxelGrid v(phantom::cube_grid(3));
  CHECK_THROWS_WITH(export_artifact(v, "obj", (dir / "v.obj").string()), doctest::Contains("incompatible artifact/format"));
  CHECK_THROWS_WITH(export_artifact(PointCloud{}, "obj", (dir / "c.obj").string()),
                    doctest::Contains("incompatible artifact/format"));
  CHECK_NOTHROW(export_artifact(v, "mrc", (dir / "v.mrc").string()));
  CHECK_NOTHROW(export_artifact(phantom::icosphere(1.0, 1), "obj", (dir / "m.obj").string()));

  DistanceReport r;
  r.queries = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  r.distance = {1.0, 2.0};
  r.mean = 1.5;
  r.stddev = 0.5;
  r.min = 1.0;
  r.max = 2.0;
  export_artifact(r, "csv", (dir / "d.csv").string());
  export_artifact(r, "json", (dir / "d.json").string());
  std::ifstream csv(dir / "d.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "vertex_id,x,y,z,d");
  const json stats = json::parse(std::ifstream(dir / "d.json"));
  CHECK(stats["mean"] == 1.5);
  CHECK(stats["std"] == 0.5);
  CHECK(stats["count"] == 2);
}

TEST_CASE("distance stage runs in isolation on explicit meshes") {
  const auto dir = scratch_dir("distance_only");
  write_ply((dir / "a.ply").string(), phantom::plane_mesh(6, 6, 1.0, 0.0));
  write_ply((dir / "b.ply").string(), phantom::plane_mesh(6, 6, 1.0, 20.0));
  const fs::path out = dir / "out";
  const PipelineConfig c = parse_config(json{{"schema_version", 1},
                                              {"stages", {"distance"}},
                                              {"output_dir", out.string()},
                                              {"inputs",
                                               {{"distance_source", (dir / "a.ply").string()},
                                                {"distance_target", (dir / "b.ply").string()}}}});
  const RunReport r = run_pipeline(c);
  REQUIRE(r.ok);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(out)) files.insert(e.path().filename().string());
  CHECK(files == std::set<std::string>{"distance.csv", "distance.json", "run_report.json"});
  const json stats = json::parse(std::ifstream(out / "distance.json"));
  CHECK(stats["mean"].get<double>() == doctest::Approx(20.0));
  CHECK(stats["std"].get<double>() == doctest::Approx(0.0));
  const json report = json::parse(std::ifstream(out / "run_report.json"));
  CHECK(report["stages"][0]["inputs"].contains("a.ply"));
  CHECK(report["stages"][0]["outputs"].contains("distance.csv"));
}

TEST_CASE("a failing stage is named in the report and earlier artifacts are kept") {
  const auto dir = scratch_dir("failure");
  const GridGeometry g = phantom::cube_grid(32);
  write_volume((dir / "empty.mrc").string(), VoxelGrid(g));
  VoxelGrid m = phantom::two_sheets(g, phantom::grid_center(g), 12.0, 4.0, 10.0);
  write_volume((dir / "m.mrc").string(), m);

  PipelineConfig c = sheets_config(dir / "out1", (dir / "empty.mrc").string());
  RunReport r = run_pipeline(c);
  CHECK_FALSE(r.ok);
  CHECK(r.failed_stage == "roi-post");
  const json rep = json::parse(std::ifstream(dir / "out1" / "run_report.json"));
  CHECK(rep["ok"] == false);
  CHECK(rep["failed_stage"] == "roi-post");

  // missing artifact for a downstream stage
  c = sheets_config(dir / "out2", (dir / "m.mrc").string());
  c.stages = {"roi-post", "medial", "mesh"};
  r = run_pipeline(c);
  CHECK(r.failed_stage == "mesh");
  CHECK(fs::exists(dir / "out2" / "roi_labels.mrc"));
  CHECK(fs::exists(dir / "out2" / "medial.ply"));
  CHECK(r.stages.back().error.find("oriented.ply") != std::string::npos);
}

TEST_CASE("stage-by-stage runs equal the end-to-end run, at any thread count") {
  const auto dir = scratch_dir("isolation");
  const GridGeometry g = phantom::cube_grid(48);
  write_volume((dir / "m.mrc").string(), phantom::two_sheets(g, phantom::grid_center(g), 14.0, 4.0, 14.0));
  const std::string membrane = (dir / "m.mrc").string();

  PipelineConfig full = sheets_config(dir / "full", membrane);
  full.threads = 1;
  const RunReport r = run_pipeline(full);
  REQUIRE_MESSAGE(r.ok, r.error);

  PipelineConfig step = sheets_config(dir / "steps", membrane);
  step.threads = 2;
  for (const auto& s : all_stages()) {
    step.stages = {s};
    const RunReport rs = run_pipeline(step);
    REQUIRE_MESSAGE(rs.ok, s << ": " << rs.error);
  }
  const auto a = digests(dir / "full"), b = digests(dir / "steps");
  CHECK(a.size() >= 15);
  CHECK(a == b);

  const json stats = json::parse(std::ifstream(dir / "full" / "distance.json"));
  CHECK(stats["mean"].get<double>() == doctest::Approx(14.0).epsilon(1.0 / 14.0));
}

TEST_CASE("command-line exit codes") {
  const char* cli = std::getenv("SURFORA_CLI");
  if (!cli) {
    MESSAGE("SURFORA_CLI not set; skipping");
    return;
  }
  const auto dir = scratch_dir("cli");
  const std::string base = std::string(cli) + " ";
  auto run = [&](const std::string& args) {
    const int rc = std::system((base + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  const std::string out = (dir / "out").string();
  CHECK(run("phantom sheets -n 40 --separation 12 -o " + (dir / "s").string()) == 0);
  CHECK(fs::exists(dir / "s_membrane.mrc"));
  CHECK(run("roi-post --membrane " + (dir / "s_membrane.mrc").string() + " -o " + out) == 0);
  CHECK(fs::exists(dir / "out" / "roi_labels.mrc"));
  CHECK(run("medial -o " + out + " --set medial.k_neighbors=1") == 2);
  CHECK(run("roi-post --membrane /nonexistent.mrc -o " + out) == 3);
  CHECK(run("mesh -o " + (dir / "nothing").string()) == 3);
  std::ofstream(dir / "bad.json") << "{\"schema_version\": 1, \"unknown\": 3}";
  CHECK(run("pipeline --config " + (dir / "bad.json").string()) == 2);
  CHECK(run("frobnicate") == 2);
}
