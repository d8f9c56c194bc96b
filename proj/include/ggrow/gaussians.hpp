// SPDX-License-Identifier: Apache-2.0
//
// Oriented 2-D Gaussian disks grown on a point cloud.

#pragma once

#include "ggrow/cloud_io.hpp"
#include "ggrow/distance_field.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ggrow {

inline constexpr double kMinScale = 1e-5;
inline constexpr double kMaxScale = 0.5;
/// Zeroth-order real spherical harmonic, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

struct GaussianDisk {
  Vec3 center = Vec3::Zero();
  Quat rotation = Quat::Identity();  ///< takes +z to the disk normal
  Vec2 scale = Vec2::Constant(0.01);
  double opacity = 0.9;
  Vec3 color = Vec3::Constant(0.5);
  bool grown = false;
  std::uint32_t source_index = 0;
  bool normal_fallback = false;

  Vec3 normal() const { return rotation * Vec3::UnitZ(); }
};

/// Disk collection with a cached grown count. Geometry (center, rotation,
/// scale) is fixed at construction; only appearance and the grown flag
/// change, and grown never reverts to false.
class GaussianSet {
 public:
  GaussianSet() = default;
  explicit GaussianSet(std::vector<GaussianDisk> disks);

  std::size_t size() const { return disks_.size(); }
  bool empty() const { return disks_.empty(); }
  const GaussianDisk& operator[](std::size_t i) const { return disks_[i]; }
  std::span<const GaussianDisk> disks() const { return disks_; }

  std::size_t grown_count() const { return grown_count_; }
  double grown_fraction() const {
    return disks_.empty() ? 0.0 : static_cast<double>(grown_count_) / disks_.size();
  }
  std::vector<std::uint32_t> grown_indices() const;
  std::vector<std::uint32_t> ungrown_indices() const;

  void set_color(std::size_t i, const Vec3& c);
  void set_opacity(std::size_t i, double o);
  void mark_grown(std::size_t i);

  /// Replaced on every mutation by a process-unique stamp; render caches
  /// compare against it.
  std::uint64_t version() const { return version_; }

 private:
  std::vector<GaussianDisk> disks_;
  std::size_t grown_count_ = 0;
  std::uint64_t version_ = 0;
};

struct DiskInit {
  double opacity = 0.9;
  Vec3 color = Vec3::Constant(0.5);
  /// Disk scale = scale_factor * spacing_i.
  double scale_factor = 1.0;
};

/// One disk per point: center p_i, normal from the field, isotropic scale
/// scale_factor * spacing_i, constant initial appearance, grown = false.
GaussianSet init_from_cloud(const PointCloud& cloud, const UnsignedField& field,
                            std::span<const double> spacing, const DiskInit& init = {},
                            int threads = 0);

struct SpatialInpaintReport {
  struct Fill {
    std::uint32_t disk;
    int round;
    std::vector<std::uint32_t> contributors;
  };
  int rounds = 0;
  std::vector<Fill> fills;
  std::vector<std::uint32_t> still_ungrown;
};

/// Inverse-distance-weighted color/opacity transfer from grown neighbors
/// within `radius`, one synchronous round at a time.
SpatialInpaintReport spatial_inpaint(GaussianSet& set, double radius, int max_rounds = 5);

/// Binary little-endian splat PLY: x y z nx ny nz f_dc_0..2 opacity
/// scale_0..2 rot_0..3, all float32. Color uses the SH DC convention,
/// opacity is stored as a logit and scales as logs.
void export_splat_ply(const GaussianSet& set, const std::string& path);
GaussianSet import_splat_ply(const std::string& path);

double logit(double p);
double sigmoid(double x);

}  // namespace ggrow
