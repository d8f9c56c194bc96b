// SPDX-License-Identifier: Apache-2.0
//
// Per-view visible disk sets from first-hit attribution, overlap regions
// between views, and front-facing subsets. All sets are sorted ascending.

#pragma once

#include "ggrow/splatter.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ggrow {

using IndexSet = std::vector<std::uint32_t>;

/// Union of first-hit indices over all pixels at the pose's resolution.
/// Tiles are processed in parallel with per-thread bitmaps OR-reduced.
IndexSet visible_set(const GaussianSet& set, const CameraPose& pose,
                     const SplatConfig& cfg = {}, int threads = 0);

/// Same algorithm on one thread, no OpenMP. Reference for equality tests.
IndexSet visible_set_serial(const GaussianSet& set, const CameraPose& pose,
                            const SplatConfig& cfg = {});

/// Union of a rendered first-hit buffer.
IndexSet visible_from_render(const RenderOutput& r);

/// Opacity-free oracle: each pixel takes the min-(depth, index) disk whose
/// truncated screen ellipse contains it; every pixel tests every disk.
IndexSet brute_force_visible(const GaussianSet& set, const CameraPose& pose,
                             const SplatConfig& cfg = {});

struct OverlapRegion {
  int view_i = 0, view_j = 0;
  IndexSet members;
  Vec3 centroid = Vec3::Zero();
  Vec3 mean_normal = Vec3::Zero();  ///< zero when members is empty
};

/// Builds a region from precomputed visible sets. Normals are sign-aligned
/// to the bisector of the two camera directions before averaging.
OverlapRegion make_overlap_region(const GaussianSet& set, const IndexSet& visible_i,
                                  const IndexSet& visible_j, const CameraPose& pose_i,
                                  const CameraPose& pose_j, int view_i = 0, int view_j = 1);

OverlapRegion overlap_region(const GaussianSet& set, const CameraPose& pose_i,
                             const CameraPose& pose_j, const SplatConfig& cfg = {},
                             int threads = 0);

/// cos(85 degrees): disks closer than 5 degrees to edge-on are excluded.
inline constexpr double kFrontFacingCos = 0.08715574274765817;

/// Members of `visible` whose camera-facing normal n satisfies
/// n . ray < -cos_threshold, ray being the unit direction camera -> center.
IndexSet front_facing_subset(const GaussianSet& set, const CameraPose& pose,
                             const IndexSet& visible, double cos_threshold = kFrontFacingCos);

IndexSet front_facing(const GaussianSet& set, const CameraPose& pose,
                      const SplatConfig& cfg = {}, int threads = 0,
                      double cos_threshold = kFrontFacingCos);

IndexSet set_intersection(const IndexSet& a, const IndexSet& b);

/// JSON array of {view_pair, member_count, centroid, mean_normal}.
std::string overlap_regions_json(std::span<const OverlapRegion> regions);

}  // namespace ggrow
