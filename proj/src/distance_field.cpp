// SPDX-License-Identifier: Apache-2.0

#include "ggrow/distance_field.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace ggrow {

namespace {

thread_local std::vector<Neighbor> tls_neighbors;

void require_finite(const Vec3& x) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite field query");
}

}  // namespace

UnsignedField::UnsignedField(const PointCloud& cloud, FieldConfig cfg)
    : cloud_(cloud), tree_(cloud.points) {
  if (cloud.size() < 4) {
    throw Error(ErrorCode::TooFewPoints, "distance field needs at least 4 points");
  }
  k_ = std::clamp<std::size_t>(cfg.k_blend, 1, cloud.size());
  median_spacing_ = estimate_spacing(cloud, std::min<std::size_t>(8, cloud.size() - 1)).median;
  beta_ = cfg.bandwidth > 0.0 ? cfg.bandwidth : 2.0 * median_spacing_;
  hit_eps_ = cfg.hit_eps_factor * beta_;
  step_min_ = cfg.step_min_factor * beta_;
}

double UnsignedField::eval_neighbors(const std::vector<Neighbor>& nb) const {
  const double r0 = std::sqrt(nb.front().dist2);
  double s = 0.0;
  for (const Neighbor& n : nb) s += std::exp(-(std::sqrt(n.dist2) - r0) / beta_);
  const double d = r0 - beta_ * std::log(s / static_cast<double>(k_));
  return std::max(d, 0.0);
}

double UnsignedField::eval(const Vec3& x) const {
  require_finite(x);
  auto& nb = tls_neighbors;
  tree_.knn_into(x, k_, std::nullopt, nb);
  return eval_neighbors(nb);
}

FieldGradient UnsignedField::grad(const Vec3& x) const {
  require_finite(x);
  std::vector<Neighbor> nb;
  tree_.knn_into(x, k_, std::nullopt, nb);
  const double d = eval_neighbors(nb);
  const double r0 = std::sqrt(nb.front().dist2);

  if (d <= 1e-6 || r0 < 1e-9) {
    const Vec3& nearest = tree_.point(nb.front().index);
    Vec3 u = x - nearest;
    u = u.norm() > 1e-12 ? Vec3(u.normalized()) : pca_normal(x);
    const double h = 1e-3 * beta_;
    FieldGradient g;
    g.value = (eval(x + h * u) - d) / h * u;
    g.fallback = true;
    return g;
  }

  Vec3 acc = Vec3::Zero();
  double wsum = 0.0;
  for (const Neighbor& n : nb) {
    const double r = std::sqrt(n.dist2);
    const double w = std::exp(-(r - r0) / beta_);
    acc += w * (x - tree_.point(n.index)) / r;
    wsum += w;
  }
  return FieldGradient{acc / wsum, false};
}

Vec3 UnsignedField::pca_normal(const Vec3& p) const {
  const std::vector<Neighbor> nb = tree_.knn(p, std::max<std::size_t>(k_, 3));
  Vec3 mean = Vec3::Zero();
  for (const Neighbor& n : nb) mean += tree_.point(n.index);
  mean /= static_cast<double>(nb.size());
  Mat3 cov = Mat3::Zero();
  for (const Neighbor& n : nb) {
    const Vec3 d = tree_.point(n.index) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  return es.eigenvectors().col(0).normalized();
}

FieldNormal UnsignedField::normal_at(const Vec3& p) const {
  require_finite(p);
  // Probing both sides and differencing cancels the lateral bias that an
  // asymmetric neighbor set (ties on regular grids) adds to either gradient.
  const Vec3 seed = pca_normal(p);
  const Vec3 g = grad(p + beta_ * seed).value - grad(p - beta_ * seed).value;
  if (g.norm() > 1e-12) return FieldNormal{g.normalized(), false};

  const std::vector<Neighbor> nb = tree_.knn(p, k_);
  Vec3 centroid = Vec3::Zero();
  for (const Neighbor& n : nb) centroid += tree_.point(n.index);
  centroid /= static_cast<double>(nb.size());
  Vec3 dir = p - centroid;
  return FieldNormal{dir.norm() > 1e-12 ? Vec3(dir.normalized()) : seed, true};
}

std::optional<TraceHit> UnsignedField::sphere_trace(const Vec3& origin,
                                                    const Vec3& dir,
                                                    double t_max) const {
  require_finite(origin);
  require_finite(dir);
  if (std::abs(dir.norm() - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "sphere_trace direction must be unit length");
  }

  // Nothing can register a hit outside the inflated bounding sphere, so the
  // march starts at its entry and stops at its exit.
  const double bound = cloud_.bounding_radius + 2.0 * hit_eps_;
  const Vec3 oc = origin - cloud_.bounding_center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - bound * bound;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = std::max(0.0, -b - sq);
  const double t_exit = std::min(t_max, -b + sq);
  if (t > t_exit) return std::nullopt;

  auto& nb = tls_neighbors;
  auto f = [&](double s) {
    tree_.knn_into(origin + s * dir, k_, std::nullopt, nb);
    return eval_neighbors(nb);
  };

  double d = f(t);
  while (d >= hit_eps_) {
    t += std::max(d, step_min_);
    if (t > t_exit) return std::nullopt;
    d = f(t);
  }

  // Bracket the first local minimum beyond the hit by stepping forward, so a
  // thin shell's far sheet inside the window cannot win; refine it by
  // golden-section search.
  const double end = std::min(t + 2.0 * hit_eps_, t_max);
  const double h = 0.125 * hit_eps_;
  double a = t, s = t, fs = d;
  while (s + h <= end) {
    const double fn = f(s + h);
    if (fn >= fs) break;
    a = s;
    s += h;
    fs = fn;
  }
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = a, hi = std::min(s + h, end);
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 24; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  const double tm = 0.5 * (lo + hi);
  const double t_surface = f(tm) < fs ? tm : s;
  return TraceHit{t, origin + t * dir, t_surface, origin + t_surface * dir};
}

}  // namespace ggrow
