// SPDX-License-Identifier: Apache-2.0
//
// Point cloud loading, validation, unit normalization and local spacing.

#pragma once

#include "ggrow/common.hpp"
#include "ggrow/ply.hpp"

#include <span>
#include <string>
#include <vector>

namespace ggrow {

/// Input geometry. Index i is a stable identity for every downstream module.
struct PointCloud {
  std::vector<Vec3> points;
  /// Normals found in the file, if any. Diagnostics only.
  std::vector<Vec3> input_normals;
  Vec3 bounding_center = Vec3::Zero();
  double bounding_radius = 0.0;

  std::size_t size() const { return points.size(); }
};

/// Validates (>= 4 points, finite, not all coincident) and computes the
/// bounding sphere as (centroid, max distance to centroid).
PointCloud make_point_cloud(std::vector<Vec3> points,
                            std::vector<Vec3> input_normals = {});

/// Reads x,y,z (float or double) and optional nx,ny,nz from the vertex
/// element of an ascii or binary little-endian PLY.
PointCloud load_ply(const std::string& path);

/// Writes x,y,z and (when present) nx,ny,nz as float64 so that a reload is
/// bitwise identical.
void write_ply(const PointCloud& cloud, const std::string& path,
               ply::Format format = ply::Format::BinaryLittleEndian);

/// x_original = scale * x_normalized + translation.
struct Similarity {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * x + translation; }
  Similarity inverse() const { return {1.0 / scale, -translation / scale}; }
};

struct NormalizedCloud {
  PointCloud cloud;
  Similarity to_original;
};

NormalizedCloud normalize_to_unit(const PointCloud& cloud);

struct SpacingResult {
  std::vector<double> spacing;
  std::size_t clamped = 0;  ///< zero-spacing points replaced by the median
  double median = 0.0;
};

/// spacing_i = mean distance from p_i to its k nearest other points.
SpacingResult estimate_spacing(std::span<const Vec3> points, std::size_t k = 8,
                               int threads = 0);
SpacingResult estimate_spacing(const PointCloud& cloud, std::size_t k = 8,
                               int threads = 0);

/// O(N^2) reference used by tests.
SpacingResult estimate_spacing_brute_force(std::span<const Vec3> points,
                                           std::size_t k = 8);

double median_of(std::vector<double> values);

}  // namespace ggrow
