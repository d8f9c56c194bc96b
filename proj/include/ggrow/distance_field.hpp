// SPDX-License-Identifier: Apache-2.0
//
// Analytic approximate unsigned distance field over a point cloud:
//
//   d(x) = -beta * log( (1/k) * sum_j exp(-|x - p_j| / beta) )
//
// over the k nearest points p_j. The value is bounded below by the true
// distance to the nearest point and above by it plus beta*log(k); the
// gradient is a convex combination of unit vectors, so |grad| <= 1.

#pragma once

#include "ggrow/cloud_io.hpp"
#include "ggrow/kdtree.hpp"

#include <optional>

namespace ggrow {

struct FieldConfig {
  std::size_t k_blend = 8;
  /// Softmin temperature in scene units. <= 0 selects 2 x median spacing.
  double bandwidth = 0.0;
  double hit_eps_factor = 1.5;   ///< hit threshold = factor * bandwidth
  double step_min_factor = 0.25; ///< minimum march step = factor * bandwidth
};

struct FieldGradient {
  Vec3 value = Vec3::Zero();
  /// Query sat on the zero set; value is a one-sided difference along the
  /// direction away from the nearest point.
  bool fallback = false;
};

struct FieldNormal {
  Vec3 normal = Vec3::UnitZ();
  /// Gradient vanished after the off-surface offset; normal is the direction
  /// from the neighborhood centroid to the query.
  bool fallback = false;
};

struct TraceHit {
  /// First march position with d < hit_eps.
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  /// First local minimum of d within 2 hit_eps beyond t: the nearest sheet.
  double t_surface = 0.0;
  Vec3 surface = Vec3::Zero();
};

class UnsignedField {
 public:
  explicit UnsignedField(const PointCloud& cloud, FieldConfig cfg = {});

  double eval(const Vec3& x) const;
  FieldGradient grad(const Vec3& x) const;
  FieldNormal normal_at(const Vec3& p) const;

  /// Marches t += max(d, step_min) until d < hit_eps or t > t_max. The hit
  /// also carries the local minimum of d just beyond the crossing, which
  /// lies on the sheet rather than hit_eps in front of it.
  std::optional<TraceHit> sphere_trace(const Vec3& origin, const Vec3& dir,
                                       double t_max) const;

  /// Smallest-eigenvalue direction of the k_blend neighborhood around p.
  Vec3 pca_normal(const Vec3& p) const;

  const PointCloud& source() const { return cloud_; }
  const KdTree& index() const { return tree_; }
  std::size_t k_blend() const { return k_; }
  double bandwidth() const { return beta_; }
  double hit_eps() const { return hit_eps_; }
  double step_min() const { return step_min_; }
  double median_spacing() const { return median_spacing_; }

 private:
  double eval_neighbors(const std::vector<Neighbor>& nb) const;

  PointCloud cloud_;
  KdTree tree_;
  std::size_t k_;
  double beta_;
  double hit_eps_;
  double step_min_;
  double median_spacing_;
};

}  // namespace ggrow
