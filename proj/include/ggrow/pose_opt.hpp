// SPDX-License-Identifier: Apache-2.0
//
// Camera placement on the viewing sphere: an overlap-alignment objective
// with an analytic gradient, and a sigmoid-relaxed occlusion count between
// un-grown and grown disks minimized with finite differences.

#pragma once

#include "ggrow/visibility.hpp"

#include <string>
#include <vector>

namespace ggrow {

struct PoseOptConfig {
  int restarts = 8;
  int max_iters = 200;
  double step_size = 0.05;  ///< initial step, radians along the sphere
  double convergence_tol = 1e-5;
  double tau = 50.0;
  double fd_step = 1e-3;  ///< radians, per tangent-chart axis
  int max_backtracks = 10;
  /// Full O(n m) pair sum for the occlusion loss instead of the pruned one.
  bool exact_pairs = false;
  /// tau multiplies the whole first sigmoid argument rather than only the
  /// radius term.
  bool tau_scales_all = false;
  double sphere_radius = 2.5;
  /// When non-zero, iterates are restricted to directions x with
  /// x . hemisphere >= 0 (seeds outside are mirrored into it).
  Vec3 hemisphere = Vec3::Zero();
  Intrinsics intrinsics;
  SplatConfig splat;
  int threads = 0;
};

/// Checks tau > 0, restarts >= 1 and the step parameters; throws Config.
void validate(const PoseOptConfig& cfg);

struct AlignEval {
  double loss = 0.0;
  Vec3 grad = Vec3::Zero();  ///< Euclidean gradient w.r.t. camera position
  int skipped = 0;           ///< members coincident with the camera
};

/// sum over members of 1 - |d . n| / (|d| |n|), d = center - camera_pos.
AlignEval align_eval(const OverlapRegion& region, const GaussianSet& set,
                     const Vec3& camera_pos);
double align_loss(const OverlapRegion& region, const GaussianSet& set, const Vec3& camera_pos);

/// Occlusion objective at a pose. Throws Precondition when the set has no
/// grown or no un-grown disks.
double occlusion_loss(const GaussianSet& set, const CameraPose& pose, const PoseOptConfig& cfg);

struct PoseTraceRow {
  int restart;
  int iter;
  Vec3 direction;
  double loss;
  double step;
};

struct PoseOptResult {
  CameraPose pose = CameraPose::look_at_origin(Vec3(2.5, 0, 0), Intrinsics{});
  double loss = 0.0;
  int best_restart = 0;
  std::vector<double> restart_losses;  ///< final loss per restart
  std::vector<double> seed_losses;     ///< loss at each seed
  bool all_diverged = false;
  std::vector<PoseTraceRow> trace;
  std::vector<std::string> warnings;
};

PoseOptResult optimize_overlap_pose(const OverlapRegion& region, const GaussianSet& set,
                                    const PoseOptConfig& cfg);
PoseOptResult optimize_unseen_pose(const GaussianSet& set, const PoseOptConfig& cfg);

/// The 12 icosahedron vertices (then level-2 icosphere points when more
/// are asked for) in farthest-point order.
std::vector<Vec3> multistart_seeds(int count);

/// Unit directions of an icosphere subdivided `level` times
/// (10 * 4^level + 2 points; level 5 gives 10242).
std::vector<Vec3> icosphere(int level);

std::string trace_csv(const std::vector<PoseTraceRow>& trace);

}  // namespace ggrow
