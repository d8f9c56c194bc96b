// SPDX-License-Identifier: Apache-2.0
//
// Two-stage appearance growth: cardinal and overlap views first, then
// unseen-pose discovery with masked inpainting, then spatial fill-in.

#pragma once

#include "ggrow/appearance.hpp"
#include "ggrow/pose_opt.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace ggrow {

struct PipelineConfig {
  int k_total = 10;
  int n_additional = 4;
  int max_inpaint_iters = 6;
  double ungrown_stop_frac = 0.01;
  int opt_iters_per_view = 300;
  double lr_color = 0.01;
  double lr_opacity = 0.005;
  int max_backtracks = 10;
  int mask_dilation_px = 3;
  /// Loss pixels need at least this much splat coverage in the initial
  /// render; thinner rims mostly show background.
  double loss_min_alpha = 0.5;
  std::string prompt = "a 3D object";
  double sphere_radius = 2.5;
  Intrinsics intrinsics;
  /// Additional poses closer than this to an existing view are dropped.
  double dedup_deg = 5.0;
  /// Spatial inpainting radius in units of the median point spacing.
  double inpaint_radius_factor = 3.0;
  FieldConfig field;
  /// Disks at half the k-NN spacing keep each pixel dominated by the disks
  /// nearest its surface point.
  DiskInit init{.scale_factor = 0.5};
  SplatConfig splat;
  PoseOptConfig pose;
  int threads = 0;
};

/// Throws Config on violated invariants (k_total = 6 + n_additional, ...).
void validate(const PipelineConfig& cfg);

/// The pose optimizer settings with camera fields taken from the pipeline.
PoseOptConfig pose_config(const PipelineConfig& cfg);

using Progress = std::function<void(const std::string&)>;

struct ViewOptResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  std::size_t mask_pixels = 0;
  std::size_t active = 0;
  std::size_t newly_grown = 0;
  bool skipped = false;
  std::string warning;
};

/// Preconditioned descent on the color and opacity of `active` disks
/// against bundle.target. The loss covers pixels whose initial first hit is
/// active, whose rendered alpha reaches loss_min_alpha, that the geometry
/// maps mark as hits, and that bundle.mask (when present) selects. Marks every active disk grown on completion.
ViewOptResult optimize_view(GaussianSet& set, const ViewBundle& bundle, const IndexSet& active,
                            const PipelineConfig& cfg);

struct ViewRecord {
  std::string kind;  ///< "cardinal" or "additional"
  CameraPose pose;
  ViewOptResult opt;
};

struct Stage1Report {
  std::vector<ViewRecord> views;
  /// Overlap regions of the orthogonal cardinal pairs after phase (a),
  /// ranked by member count.
  std::vector<OverlapRegion> regions;
  /// Member counts of the regions that received an additional view.
  std::vector<std::size_t> region_sizes;
  double grown_frac_cardinal = 0.0;
  double grown_frac = 0.0;
  std::vector<std::string> warnings;
};

Stage1Report stage1_grow(GaussianSet& set, const UnsignedField& field, AppearanceBackend& backend,
                         const PipelineConfig& cfg, const Progress& progress = {});

struct Stage2Iteration {
  CameraPose pose;
  double occlusion_loss = 0.0;
  std::size_t mask_px = 0;
  double loss = 0.0;
  double grown_frac = 0.0;
  std::size_t newly_grown = 0;
};

struct Stage2Report {
  std::vector<Stage2Iteration> iterations;
  std::string stop_reason;
  double grown_frac_before_spatial = 0.0;
  SpatialInpaintReport spatial;
  double grown_frac = 0.0;
  std::vector<std::string> warnings;
};

Stage2Report stage2_iterative_inpaint(GaussianSet& set, const UnsignedField& field,
                                      AppearanceBackend& backend, const PipelineConfig& cfg,
                                      const Progress& progress = {});

/// Cameras toward the eight cube corners; none coincides with a cardinal
/// or (generically) an optimized view.
std::array<CameraPose, 8> heldout_poses(double radius, const Intrinsics& intr);

/// Copy of `set` with oracle colors at disk centers and uniform opacity.
GaussianSet oracle_colored(const GaussianSet& set, double opacity);

/// Mean over disks of |color - oracle(center)|_2.
double mean_color_error(const GaussianSet& set);

/// Full-frame PSNR of each held-out render against the oracle-colored set.
std::vector<double> heldout_psnr(const GaussianSet& set, const PipelineConfig& cfg);

/// Mean RGB gradient magnitude of (render - oracle render) over held-out
/// pixels whose first hit belongs to an overlap region.
double seam_metric(const GaussianSet& set, std::span<const OverlapRegion> regions,
                   const PipelineConfig& cfg);

/// Euclidean dilation by `radius` pixels.
Mask dilate(const Mask& m, int radius);

struct RunResult {
  GaussianSet initial;
  GaussianSet set;
  Stage1Report stage1;
  Stage2Report stage2;
  double seam_after_stage1 = 0.0;
  double seam_final = 0.0;
  double color_error = 0.0;
  std::vector<double> psnr;
  double wall_s = 0.0;
};

/// normalize -> field -> init -> stage 1 -> stage 2 -> evaluation. No files.
RunResult run_pipeline(const PointCloud& cloud, const PipelineConfig& cfg,
                       AppearanceBackend& backend, const Progress& progress = {});

/// JSON run report. wall_s is omitted when include_wall is false.
std::string report_json(const RunResult& r, const PipelineConfig& cfg, bool include_wall = true);

/// run_pipeline on a PLY file, writing initial.ply, grown.ply, report.json
/// and renders/heldout_<k>.png under out_dir. Errors carry a stage tag.
RunResult run_full(const std::string& cloud_path, const std::string& out_dir,
                   const PipelineConfig& cfg, AppearanceBackend& backend,
                   const Progress& progress = {});

}  // namespace ggrow
