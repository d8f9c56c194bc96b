// SPDX-License-Identifier: Apache-2.0
//
// Screen-space splatting of Gaussian disks: projection, tile binning,
// front-to-back compositing, first-hit attribution, and the analytic
// color/opacity gradient of a masked L1 loss.

#pragma once

#include "ggrow/camera.hpp"
#include "ggrow/gaussians.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace ggrow {

inline constexpr std::int32_t kNoHit = -1;

struct SplatConfig {
  double near_plane = 0.05;
  /// Fragments are kept while the Mahalanobis distance is <= truncation.
  double truncation = 3.0;
  /// Minimum compositing weight for first-hit attribution.
  double w_min = 0.05;
  /// Added to both diagonal entries of the screen covariance (pixels^2).
  double dilation = 0.3;
  /// Compositing stops once transmittance drops below this; 0 disables.
  double transmittance_stop = 1e-4;
  int tile_size = 16;
};

struct Projection {
  Vec2 q;        ///< pixel-space center
  double z;      ///< view-axis depth
  double rho;    ///< 3 sqrt(lambda_max(cov2d)), pixels
  Mat2 cov2d;
  Mat2 conic;    ///< inverse of cov2d
};

std::optional<Projection> project(const GaussianDisk& disk, const CameraPose& pose,
                                  const SplatConfig& cfg = {});

/// Squared Mahalanobis distance of a pixel-space point from a projection.
inline double mahalanobis2(const Projection& p, const Vec2& x) {
  const Vec2 d = x - p.q;
  return d.dot(p.conic * d);
}

/// Per-tile disk lists sorted front to back by (z, index).
struct ScreenBins {
  int width = 0, height = 0, tile_size = 16, tiles_x = 0, tiles_y = 0;
  std::vector<Projection> projections;  ///< indexed by disk
  std::vector<std::uint8_t> projected;  ///< 1 if the disk projected in front
  std::vector<std::uint32_t> tile_offsets;
  std::vector<std::uint32_t> tile_disks;

  std::span<const std::uint32_t> tile(int tx, int ty) const {
    const std::size_t t = static_cast<std::size_t>(ty) * tiles_x + tx;
    return {tile_disks.data() + tile_offsets[t], tile_offsets[t + 1] - tile_offsets[t]};
  }
};

ScreenBins bin_disks(const GaussianSet& set, const CameraPose& pose, const SplatConfig& cfg,
                     int threads = 0);

/// Opacity-independent per-pixel fragment lists (CSR, row-major pixels,
/// each list front to back). Reusable while geometry and pose are fixed.
struct FragmentGeometry {
  int width = 0, height = 0;
  std::vector<std::uint32_t> offsets;  ///< width * height + 1
  std::vector<std::uint32_t> disk;
  std::vector<float> falloff;
  std::size_t disk_count = 0;
};

FragmentGeometry build_fragments(const GaussianSet& set, const CameraPose& pose,
                                 const SplatConfig& cfg = {}, int threads = 0);

struct RenderOutput {
  Raster<Vec3> color;
  Raster<float> alpha;
  Raster<std::int32_t> first_hit;
  Vec3 background = Vec3::Ones();
  SplatConfig cfg;
  std::uint64_t set_version = 0;
  /// Present when the forward pass was asked to retain fragments.
  std::shared_ptr<const FragmentGeometry> fragments;
  /// Compositing weight per fragment (0 past the transmittance stop).
  std::vector<float> weights;

  int width() const { return color.width; }
  int height() const { return color.height; }
};

RenderOutput render(const GaussianSet& set, const CameraPose& pose,
                    const Vec3& background = Vec3::Ones(), const SplatConfig& cfg = {},
                    bool retain_fragments = false, int threads = 0);

/// Composite current appearance over previously built fragments.
RenderOutput composite(const GaussianSet& set,
                       std::shared_ptr<const FragmentGeometry> fragments,
                       const Vec3& background = Vec3::Ones(), const SplatConfig& cfg = {},
                       bool retain_weights = false, int threads = 0);

Image to_image(const RenderOutput& r);

/// Mean absolute error over masked pixels and the three channels.
double photometric_loss(const RenderOutput& r, const Image& target, const Mask* mask = nullptr);

struct AppearanceGradient {
  std::vector<Vec3> d_color;
  std::vector<double> d_opacity;
  double loss = 0.0;
};

/// Exact gradient of photometric_loss(r, target, mask) with respect to the
/// colors and opacities of `active` disks; all other entries are zero.
/// `r` must carry fragments and match the current version of `set`.
AppearanceGradient backward_color_opacity(const GaussianSet& set, const RenderOutput& r,
                                          const Image& target, const Mask* mask,
                                          std::span<const std::uint32_t> active,
                                          int threads = 0);

}  // namespace ggrow
