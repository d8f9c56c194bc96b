// SPDX-License-Identifier: Apache-2.0

#include "ggrow/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace ggrow {

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points.size() / std::max<std::size_t>(leaf_size, 1) + 2);
  if (!points_.empty()) {
    build(0, static_cast<std::uint32_t>(points_.size()),
          std::max<std::size_t>(leaf_size, 1));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end,
                           std::size_t leaf) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int dim;
  (hi - lo).maxCoeff(&dim);
  if (hi[dim] == lo[dim]) return id;  // all coincident: keep as leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][dim], pb = points_[b][dim];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][dim];
  const std::int32_t left = build(begin, mid, leaf);
  const std::int32_t right = build(mid, end, leaf);
  Node& n = nodes_[id];
  n.dim = dim;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

namespace {

void offer(std::vector<Neighbor>& best, std::size_t k, const Neighbor& cand) {
  if (best.size() == k && !(cand < best.back())) return;
  auto pos = std::upper_bound(best.begin(), best.end(), cand);
  best.insert(pos, cand);
  if (best.size() > k) best.pop_back();
}

}  // namespace

void KdTree::search_knn(std::int32_t id, const Vec3& q, std::size_t k,
                        std::int64_t exclude,
                        std::vector<Neighbor>& best) const {
  const Node& n = nodes_[id];
  if (n.dim < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t idx = order_[i];
      if (static_cast<std::int64_t>(idx) == exclude) continue;
      offer(best, k, Neighbor{idx, (points_[idx] - q).squaredNorm()});
    }
    return;
  }
  const double diff = q[n.dim] - n.split;
  const std::int32_t near = diff < 0 ? n.left : n.right;
  const std::int32_t far = diff < 0 ? n.right : n.left;
  search_knn(near, q, k, exclude, best);
  if (best.size() < k || diff * diff <= best.back().dist2) {
    search_knn(far, q, k, exclude, best);
  }
}

void KdTree::knn_into(const Vec3& q, std::size_t k,
                      std::optional<std::uint32_t> exclude,
                      std::vector<Neighbor>& out) const {
  out.clear();
  if (points_.empty() || k == 0) return;
  out.reserve(k + 1);
  search_knn(0, q, k, exclude ? static_cast<std::int64_t>(*exclude) : -1, out);
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, std::size_t k,
                                  std::optional<std::uint32_t> exclude) const {
  std::vector<Neighbor> out;
  knn_into(q, k, exclude, out);
  return out;
}

void KdTree::search_radius(std::int32_t id, const Vec3& q, double r2,
                           std::vector<std::uint32_t>& out) const {
  const Node& n = nodes_[id];
  if (n.dim < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t idx = order_[i];
      if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
    }
    return;
  }
  const double diff = q[n.dim] - n.split;
  const std::int32_t near = diff < 0 ? n.left : n.right;
  const std::int32_t far = diff < 0 ? n.right : n.left;
  search_radius(near, q, r2, out);
  if (diff * diff <= r2) search_radius(far, q, r2, out);
}

std::vector<std::uint32_t> KdTree::radius(const Vec3& q, double r) const {
  std::vector<std::uint32_t> out;
  if (!points_.empty()) search_radius(0, q, r * r, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points,
                                      const Vec3& q, std::size_t k,
                                      std::optional<std::uint32_t> exclude) {
  std::vector<Neighbor> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (exclude && *exclude == i) continue;
    all.push_back(Neighbor{static_cast<std::uint32_t>(i),
                           (points[i] - q).squaredNorm()});
  }
  const std::size_t m = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + m, all.end());
  all.resize(m);
  return all;
}

}  // namespace ggrow
