// SPDX-License-Identifier: Apache-2.0
//
// Static 3-D kd-tree with exact k-nearest and radius queries. Results are
// ordered by (squared distance, index) so ties never depend on traversal.

#pragma once

#include "ggrow/common.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ggrow {

struct Neighbor {
  std::uint32_t index;
  double dist2;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor& a, const Neighbor& b) = default;
};

class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 10);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// k nearest points to q, sorted ascending. `exclude` skips one index
  /// (the query's own slot for self-excluding neighborhoods).
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k,
                            std::optional<std::uint32_t> exclude = {}) const;
  /// Allocation-free variant; `out` is overwritten.
  void knn_into(const Vec3& q, std::size_t k,
                std::optional<std::uint32_t> exclude,
                std::vector<Neighbor>& out) const;

  /// All indices within distance r of q (inclusive), sorted by index.
  std::vector<std::uint32_t> radius(const Vec3& q, double r) const;

 private:
  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
    int dim = -1;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf);
  void search_knn(std::int32_t node, const Vec3& q, std::size_t k,
                  std::int64_t exclude, std::vector<Neighbor>& best) const;
  void search_radius(std::int32_t node, const Vec3& q, double r2,
                     std::vector<std::uint32_t>& out) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Exhaustive O(N) reference for knn; identical ordering contract.
std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points,
                                      const Vec3& q, std::size_t k,
                                      std::optional<std::uint32_t> exclude = {});

}  // namespace ggrow
