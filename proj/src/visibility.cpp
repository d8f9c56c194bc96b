// SPDX-License-Identifier: Apache-2.0

#include "ggrow/visibility.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>

namespace ggrow {

namespace {

using Bitmap = std::vector<std::uint64_t>;

// First-hit search over one tile. Matches composite(): falloff is rounded
// to float, and once transmittance is <= w_min no later fragment can carry
// a weight above it.
void id_pass_tile(const ScreenBins& b, const std::vector<double>& opacity,
                  const SplatConfig& cfg, int tx, int ty, Bitmap& bits) {
  const auto list = b.tile(tx, ty);
  if (list.empty()) return;
  const double t2 = cfg.truncation * cfg.truncation;
  const int x0 = tx * b.tile_size, y0 = ty * b.tile_size;
  const int x1 = std::min(x0 + b.tile_size, b.width);
  const int y1 = std::min(y0 + b.tile_size, b.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const Vec2 c(x + 0.5, y + 0.5);
      double t = 1.0;
      for (std::uint32_t i : list) {
        const double m = mahalanobis2(b.projections[i], c);
        if (m > t2) continue;
        const double alpha = opacity[i] * static_cast<float>(std::exp(-0.5 * m));
        if (alpha * t > cfg.w_min) {
          bits[i >> 6] |= std::uint64_t{1} << (i & 63);
          break;
        }
        t *= 1.0 - alpha;
        if (t <= cfg.w_min) break;
      }
    }
  }
}

IndexSet bitmap_to_set(const Bitmap& bits) {
  IndexSet out;
  for (std::size_t w = 0; w < bits.size(); ++w) {
    std::uint64_t v = bits[w];
    while (v) {
      out.push_back(static_cast<std::uint32_t>(w * 64 + std::countr_zero(v)));
      v &= v - 1;
    }
  }
  return out;
}

std::vector<double> opacities(const GaussianSet& set) {
  std::vector<double> o(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) o[i] = set[i].opacity;
  return o;
}

}  // namespace

IndexSet visible_set(const GaussianSet& set, const CameraPose& pose, const SplatConfig& cfg,
                     int threads) {
  const int nt = resolve_threads(threads);
  const ScreenBins b = bin_disks(set, pose, cfg, nt);
  const std::vector<double> o = opacities(set);
  const std::size_t words = (set.size() + 63) / 64;
  const std::int64_t ntiles = static_cast<std::int64_t>(b.tiles_x) * b.tiles_y;
  Bitmap merged(words, 0);
#pragma omp parallel num_threads(nt)
  {
    Bitmap local(words, 0);
#pragma omp for schedule(dynamic, 2) nowait
    for (std::int64_t t = 0; t < ntiles; ++t) {
      id_pass_tile(b, o, cfg, static_cast<int>(t % b.tiles_x), static_cast<int>(t / b.tiles_x),
                   local);
    }
#pragma omp critical
    for (std::size_t w = 0; w < words; ++w) merged[w] |= local[w];
  }
  return bitmap_to_set(merged);
}

IndexSet visible_set_serial(const GaussianSet& set, const CameraPose& pose,
                            const SplatConfig& cfg) {
  const ScreenBins b = bin_disks(set, pose, cfg, 1);
  const std::vector<double> o = opacities(set);
  Bitmap bits((set.size() + 63) / 64, 0);
  for (int ty = 0; ty < b.tiles_y; ++ty) {
    for (int tx = 0; tx < b.tiles_x; ++tx) id_pass_tile(b, o, cfg, tx, ty, bits);
  }
  return bitmap_to_set(bits);
}

IndexSet visible_from_render(const RenderOutput& r) {
  IndexSet out;
  for (std::int32_t h : r.first_hit.data) {
    if (h != kNoHit) out.push_back(static_cast<std::uint32_t>(h));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

IndexSet brute_force_visible(const GaussianSet& set, const CameraPose& pose,
                             const SplatConfig& cfg) {
  const int w = pose.intrinsics().width, h = pose.intrinsics().height;
  std::vector<std::optional<Projection>> proj(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) proj[i] = project(set[i], pose, cfg);
  const double t2 = cfg.truncation * cfg.truncation;
  std::vector<std::uint8_t> seen(set.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 c(x + 0.5, y + 0.5);
      std::int64_t best = -1;
      double best_z = 0.0;
      for (std::size_t i = 0; i < set.size(); ++i) {
        if (!proj[i] || mahalanobis2(*proj[i], c) > t2) continue;
        if (best < 0 || proj[i]->z < best_z) {
          best = static_cast<std::int64_t>(i);
          best_z = proj[i]->z;
        }
      }
      if (best >= 0) seen[static_cast<std::size_t>(best)] = 1;
    }
  }
  IndexSet out;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

IndexSet set_intersection(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

OverlapRegion make_overlap_region(const GaussianSet& set, const IndexSet& visible_i,
                                  const IndexSet& visible_j, const CameraPose& pose_i,
                                  const CameraPose& pose_j, int view_i, int view_j) {
  OverlapRegion r;
  r.view_i = view_i;
  r.view_j = view_j;
  r.members = set_intersection(visible_i, visible_j);
  if (r.members.empty()) return r;
  Vec3 bisector = pose_i.position().normalized() + pose_j.position().normalized();
  if (bisector.norm() < 1e-9) bisector = pose_i.position();
  Vec3 sum = Vec3::Zero();
  for (std::uint32_t m : r.members) {
    r.centroid += set[m].center;
    const Vec3 n = set[m].normal();
    sum += n.dot(bisector) < 0.0 ? Vec3(-n) : n;
  }
  r.centroid /= static_cast<double>(r.members.size());
  if (sum.norm() > 1e-12) r.mean_normal = sum.normalized();
  return r;
}

OverlapRegion overlap_region(const GaussianSet& set, const CameraPose& pose_i,
                             const CameraPose& pose_j, const SplatConfig& cfg, int threads) {
  return make_overlap_region(set, visible_set(set, pose_i, cfg, threads),
                             visible_set(set, pose_j, cfg, threads), pose_i, pose_j);
}

IndexSet front_facing_subset(const GaussianSet& set, const CameraPose& pose,
                             const IndexSet& visible, double cos_threshold) {
  IndexSet out;
  for (std::uint32_t i : visible) {
    const Vec3 ray = (set[i].center - pose.position()).normalized();
    if (std::abs(set[i].normal().dot(ray)) > cos_threshold) out.push_back(i);
  }
  return out;
}

IndexSet front_facing(const GaussianSet& set, const CameraPose& pose, const SplatConfig& cfg,
                      int threads, double cos_threshold) {
  return front_facing_subset(set, pose, visible_set(set, pose, cfg, threads), cos_threshold);
}

std::string overlap_regions_json(std::span<const OverlapRegion> regions) {
  nlohmann::json arr = nlohmann::json::array();
  for (const OverlapRegion& r : regions) {
    arr.push_back({{"view_pair", {r.view_i, r.view_j}},
                   {"member_count", r.members.size()},
                   {"centroid", {r.centroid.x(), r.centroid.y(), r.centroid.z()}},
                   {"mean_normal", {r.mean_normal.x(), r.mean_normal.y(), r.mean_normal.z()}}});
  }
  return arr.dump(2);
}

}  // namespace ggrow
