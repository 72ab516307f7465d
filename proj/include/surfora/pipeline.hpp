#pragma once

#include "surfora/fields.hpp"
#include "surfora/medial.hpp"
#include "surfora/meshing.hpp"
#include "surfora/metrics.hpp"
#include "surfora/normals.hpp"
#include "surfora/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <variant>
#include <string>
#include <vector>

namespace surfora {

/// Stage order of a full run.
const std::vector<std::string>& all_stages();

struct RoiPostParams {
  int open_close_radius_vox = 1;  // 0 disables denoising
  int connectivity = 26;
  bool watershed = false;
  double watershed_min_seed_dist_nm = 10.0;
  int min_component_voxels = 10;
  double crop_margin_nm = 8.0;

  void validate() const;
};

struct IsoParams {
  FlowParams flow;
  bool curvature_flow = true;
  double flip_eps_nm = 0.5;

  void validate() const;
};

struct DistanceParams {
  int source_label = 1;
  int target_label = 2;

  void validate() const;
};

struct CurvatureStageParams {
  CurvatureParams params;
  std::string input = "medial_mesh";  // medial_mesh | inner | outer | iso

  void validate() const;
};

struct PipelineConfig {
  int schema_version = 1;
  double voxel_size_nm = 1.0;

  std::string membrane;  // segmentation volume
  std::string roi;       // optional ROI label volume
  // Explicit stage inputs override the artifacts in output_dir.
  std::string medial_mesh_input;
  std::string distance_source;
  std::string distance_target;

  std::vector<std::string> stages;
  std::string output_dir = "surfora_out";
  std::uint64_t rng_seed = 0;
  int threads = 0;  // 0: SURFORA_THREADS or hardware

  RoiPostParams roi_post;
  MedialParams medial;
  IsoParams iso;
  OrientParams orient;
  MeshParams mesh;
  DistanceParams distance;
  CurvatureStageParams curvature;

  /// Checks every parameter block of the selected stages.
  void validate() const;
};

constexpr int kSchemaVersion = 1;

/// Parses a config document. Lengths accept numbers (nm) or strings with an
/// "nm" or "vox" suffix; voxel lengths are converted with `voxel_nm` unless
/// the document sets voxel_size_nm.
PipelineConfig parse_config(const nlohmann::json& doc, double voxel_nm = 1.0);
nlohmann::json config_to_json(const PipelineConfig& config);

/// Length in nm from a number or a suffixed string.
double parse_length(const nlohmann::json& value, double voxel_nm);

/// Applies "a.b.c=value" overrides; value parsed as JSON when possible.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageReport {
  std::string name;
  std::string status = "pending";  // ok | failed | skipped
  double seconds = 0.0;
  nlohmann::json inputs = nlohmann::json::object();   // file -> digest
  nlohmann::json outputs = nlohmann::json::object();  // file -> digest
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> warnings;
  std::string error;
};

struct RunReport {
  bool ok = true;
  std::string failed_stage;
  std::string error;
  std::vector<StageReport> stages;
  nlohmann::json params;

  nlohmann::json to_json() const;
};

using Artifact = std::variant<VoxelGrid, ScalarField, PointCloud, TriangleMesh, DistanceReport>;

/// Writes an artifact as ply, obj, xyz, csv, json or mrc. Throws
/// "incompatible artifact/format" for pairs without a defined encoding.
void export_artifact(const Artifact& artifact, const std::string& format, const std::string& path);

/// Summary statistics of a distance report as written to distance.json.
nlohmann::json distance_stats_json(const DistanceReport& report);

/// 64-bit FNV-1a digest of a file, as 16 hex digits.
std::string file_digest(const std::string& path);

/// Runs the selected stages in order, writing artifacts and run_report.json to
/// output_dir. Stage failures are recorded in the report, not thrown.
RunReport run_pipeline(const PipelineConfig& config);

}  // namespace surfora
