// SPDX-License-Identifier: Apache-2.0

#include "ggrow/splatter.hpp"

#include <algorithm>
#include <cmath>

namespace ggrow {

std::optional<Projection> project(const GaussianDisk& disk, const CameraPose& pose,
                                  const SplatConfig& cfg) {
  const Vec3 d = disk.center - pose.position();
  const double z = pose.forward().dot(d);
  if (z <= cfg.near_plane) return std::nullopt;
  const double f = pose.intrinsics().focal_px();
  const double xc = pose.right().dot(d), yc = pose.up().dot(d);

  Eigen::Matrix<double, 2, 3> j;
  j.row(0) = (f / z) * (pose.right() - (xc / z) * pose.forward()).transpose();
  j.row(1) = -(f / z) * (pose.up() - (yc / z) * pose.forward()).transpose();
  const Vec2 a = j * (disk.rotation * Vec3::UnitX());
  const Vec2 b = j * (disk.rotation * Vec3::UnitY());

  Projection p;
  p.q = Vec2(pose.intrinsics().cx() + f * xc / z, pose.intrinsics().cy() - f * yc / z);
  p.z = z;
  p.cov2d = disk.scale.x() * disk.scale.x() * a * a.transpose() +
            disk.scale.y() * disk.scale.y() * b * b.transpose() +
            cfg.dilation * Mat2::Identity();
  const double mid = 0.5 * (p.cov2d(0, 0) + p.cov2d(1, 1));
  const double half = 0.5 * (p.cov2d(0, 0) - p.cov2d(1, 1));
  const double lmax = mid + std::sqrt(half * half + p.cov2d(0, 1) * p.cov2d(0, 1));
  p.rho = 3.0 * std::sqrt(std::max(lmax, 0.0));
  const double det = p.cov2d.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
  p.conic << p.cov2d(1, 1) / det, -p.cov2d(0, 1) / det, -p.cov2d(1, 0) / det,
      p.cov2d(0, 0) / det;
  return p;
}

namespace {

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive; empty when x0 > x1 or y0 > y1
  bool empty() const { return x0 > x1 || y0 > y1; }
};

PixelRect pixel_rect(const Projection& p, double truncation, int w, int h) {
  const double hx = truncation * std::sqrt(p.cov2d(0, 0));
  const double hy = truncation * std::sqrt(p.cov2d(1, 1));
  const auto lo = [](double v) { return static_cast<int>(std::max(-1.0, std::ceil(v))); };
  const auto hi = [](double v, int n) {
    return static_cast<int>(std::min(static_cast<double>(n), std::floor(v)));
  };
  PixelRect r{lo(p.q.x() - hx - 0.5), lo(p.q.y() - hy - 0.5), hi(p.q.x() + hx - 0.5, w),
              hi(p.q.y() + hy - 0.5, h)};
  r.x0 = std::max(r.x0, 0);
  r.y0 = std::max(r.y0, 0);
  r.x1 = std::min(r.x1, w - 1);
  r.y1 = std::min(r.y1, h - 1);
  return r;
}

}  // namespace

ScreenBins bin_disks(const GaussianSet& set, const CameraPose& pose, const SplatConfig& cfg,
                     int threads) {
  ScreenBins b;
  b.width = pose.intrinsics().width;
  b.height = pose.intrinsics().height;
  b.tile_size = cfg.tile_size;
  b.tiles_x = (b.width + b.tile_size - 1) / b.tile_size;
  b.tiles_y = (b.height + b.tile_size - 1) / b.tile_size;
  const std::size_t n = set.size();
  b.projections.resize(n);
  b.projected.assign(n, 0);
  std::vector<PixelRect> rects(n, PixelRect{0, 0, -1, -1});
  const int nt = resolve_threads(threads);

#pragma omp parallel for schedule(static) num_threads(nt)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto p = project(set[i], pose, cfg);
    if (!p) continue;
    b.projections[i] = *p;
    b.projected[i] = 1;
    rects[i] = pixel_rect(*p, cfg.truncation, b.width, b.height);
  }

  const std::size_t ntiles = static_cast<std::size_t>(b.tiles_x) * b.tiles_y;
  std::vector<std::uint32_t> counts(ntiles + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const PixelRect& r = rects[i];
    if (r.empty()) continue;
    for (int ty = r.y0 / b.tile_size; ty <= r.y1 / b.tile_size; ++ty) {
      for (int tx = r.x0 / b.tile_size; tx <= r.x1 / b.tile_size; ++tx) {
        ++counts[static_cast<std::size_t>(ty) * b.tiles_x + tx];
      }
    }
  }
  b.tile_offsets.assign(ntiles + 1, 0);
  for (std::size_t t = 0; t < ntiles; ++t) b.tile_offsets[t + 1] = b.tile_offsets[t] + counts[t];
  b.tile_disks.resize(b.tile_offsets[ntiles]);
  std::vector<std::uint32_t> cursor(b.tile_offsets.begin(), b.tile_offsets.end() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const PixelRect& r = rects[i];
    if (r.empty()) continue;
    for (int ty = r.y0 / b.tile_size; ty <= r.y1 / b.tile_size; ++ty) {
      for (int tx = r.x0 / b.tile_size; tx <= r.x1 / b.tile_size; ++tx) {
        b.tile_disks[cursor[static_cast<std::size_t>(ty) * b.tiles_x + tx]++] =
            static_cast<std::uint32_t>(i);
      }
    }
  }

  const auto& proj = b.projections;
#pragma omp parallel for schedule(dynamic, 8) num_threads(nt)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(ntiles); ++t) {
    std::sort(b.tile_disks.begin() + b.tile_offsets[t], b.tile_disks.begin() + b.tile_offsets[t + 1],
              [&](std::uint32_t l, std::uint32_t r) {
                if (proj[l].z != proj[r].z) return proj[l].z < proj[r].z;
                return l < r;
              });
  }
  return b;
}

FragmentGeometry build_fragments(const GaussianSet& set, const CameraPose& pose,
                                 const SplatConfig& cfg, int threads) {
  const ScreenBins b = bin_disks(set, pose, cfg, threads);
  FragmentGeometry fg;
  fg.width = b.width;
  fg.height = b.height;
  fg.disk_count = set.size();
  const std::size_t npix = static_cast<std::size_t>(b.width) * b.height;
  const double t2 = cfg.truncation * cfg.truncation;
  const std::int64_t ntiles = static_cast<std::int64_t>(b.tiles_x) * b.tiles_y;
  const int nt = resolve_threads(threads);

  // Pass 0 counts fragments per pixel, pass 1 writes them.
  std::vector<std::uint32_t> counts(npix, 0);
  fg.offsets.assign(npix + 1, 0);
  for (int pass = 0; pass < 2; ++pass) {
#pragma omp parallel for schedule(dynamic, 4) num_threads(nt)
    for (std::int64_t t = 0; t < ntiles; ++t) {
      const int tx = static_cast<int>(t % b.tiles_x), ty = static_cast<int>(t / b.tiles_x);
      const auto list = b.tile(tx, ty);
      const int x0 = tx * b.tile_size, y0 = ty * b.tile_size;
      const int x1 = std::min(x0 + b.tile_size, b.width);
      const int y1 = std::min(y0 + b.tile_size, b.height);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * b.width + x;
          const Vec2 c(x + 0.5, y + 0.5);
          std::uint32_t k = pass == 0 ? 0 : fg.offsets[pix];
          for (std::uint32_t i : list) {
            const double m = mahalanobis2(b.projections[i], c);
            if (m > t2) continue;
            if (pass == 1) {
              fg.disk[k] = i;
              fg.falloff[k] = static_cast<float>(std::exp(-0.5 * m));
            }
            ++k;
          }
          if (pass == 0) counts[pix] = k;
        }
      }
    }
    if (pass == 0) {
      for (std::size_t p = 0; p < npix; ++p) fg.offsets[p + 1] = fg.offsets[p] + counts[p];
      fg.disk.resize(fg.offsets[npix]);
      fg.falloff.resize(fg.offsets[npix]);
    }
  }
  return fg;
}

namespace {

struct Appearance {
  std::vector<double> opacity;
  std::vector<Vec3> color;
};

Appearance gather(const GaussianSet& set) {
  Appearance a;
  a.opacity.resize(set.size());
  a.color.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    a.opacity[i] = set[i].opacity;
    a.color[i] = set[i].color;
  }
  return a;
}

}  // namespace

RenderOutput composite(const GaussianSet& set, std::shared_ptr<const FragmentGeometry> fragments,
                       const Vec3& background, const SplatConfig& cfg, bool retain_weights,
                       int threads) {
  if (!fragments) throw Error(ErrorCode::InvalidArgument, "composite: no fragments");
  const FragmentGeometry& fg = *fragments;
  if (fg.disk_count != set.size()) {
    throw Error(ErrorCode::StaleCache, "fragment cache was built for a different set");
  }
  RenderOutput r;
  r.color = Raster<Vec3>(fg.width, fg.height, background);
  r.alpha = Raster<float>(fg.width, fg.height, 0.0f);
  r.first_hit = Raster<std::int32_t>(fg.width, fg.height, kNoHit);
  r.background = background;
  r.cfg = cfg;
  r.set_version = set.version();
  if (retain_weights) r.weights.assign(fg.disk.size(), 0.0f);
  const Appearance a = gather(set);

#pragma omp parallel for schedule(static) num_threads(resolve_threads(threads))
  for (int y = 0; y < fg.height; ++y) {
    for (int x = 0; x < fg.width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * fg.width + x;
      double t = 1.0;
      Vec3 c = Vec3::Zero();
      std::int32_t hit = kNoHit;
      for (std::uint32_t k = fg.offsets[pix]; k < fg.offsets[pix + 1]; ++k) {
        const std::uint32_t i = fg.disk[k];
        const double alpha = a.opacity[i] * fg.falloff[k];
        const double w = alpha * t;
        c += w * a.color[i];
        if (hit == kNoHit && w > cfg.w_min) hit = static_cast<std::int32_t>(i);
        if (retain_weights) r.weights[k] = static_cast<float>(w);
        t *= 1.0 - alpha;
        if (t < cfg.transmittance_stop) break;
      }
      r.color.data[pix] = c + t * background;
      r.alpha.data[pix] = static_cast<float>(1.0 - t);
      r.first_hit.data[pix] = hit;
    }
  }
  if (retain_weights) r.fragments = std::move(fragments);
  return r;
}

RenderOutput render(const GaussianSet& set, const CameraPose& pose, const Vec3& background,
                    const SplatConfig& cfg, bool retain_fragments, int threads) {
  if (set.empty()) throw Error(ErrorCode::InvalidArgument, "render: empty set");
  auto fg = std::make_shared<const FragmentGeometry>(build_fragments(set, pose, cfg, threads));
  return composite(set, std::move(fg), background, cfg, retain_fragments, threads);
}

Image to_image(const RenderOutput& r) {
  Image img(r.width(), r.height());
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = r.color.data[i].cast<float>();
  return img;
}

namespace {

void check_target(const RenderOutput& r, const Image& target, const Mask* mask) {
  if (target.width != r.width() || target.height != r.height()) {
    throw Error(ErrorCode::InvalidArgument, "target size does not match render");
  }
  if (mask && (mask->width != r.width() || mask->height != r.height())) {
    throw Error(ErrorCode::InvalidArgument, "mask size does not match render");
  }
}

std::size_t count_mask(const RenderOutput& r, const Mask* mask) {
  if (!mask) return static_cast<std::size_t>(r.width()) * r.height();
  return static_cast<std::size_t>(std::count_if(mask->data.begin(), mask->data.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

}  // namespace

double photometric_loss(const RenderOutput& r, const Image& target, const Mask* mask) {
  check_target(r, target, mask);
  const std::size_t n = count_mask(r, mask);
  if (n == 0) throw Error(ErrorCode::EmptyMask, "photometric loss over an empty mask");
  std::vector<double> rows(static_cast<std::size_t>(r.height()), 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < r.height(); ++y) {
    double s = 0.0;
    for (int x = 0; x < r.width(); ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * r.width() + x;
      if (mask && !mask->data[pix]) continue;
      s += (r.color.data[pix] - target.data[pix].cast<double>()).cwiseAbs().sum();
    }
    rows[y] = s;
  }
  double total = 0.0;
  for (double s : rows) total += s;
  return total / (3.0 * static_cast<double>(n));
}

AppearanceGradient backward_color_opacity(const GaussianSet& set, const RenderOutput& r,
                                          const Image& target, const Mask* mask,
                                          std::span<const std::uint32_t> active, int threads) {
  if (!r.fragments || (r.weights.empty() && !r.fragments->disk.empty())) {
    throw Error(ErrorCode::Precondition, "backward pass needs retained fragments");
  }
  if (r.set_version != set.version() || r.fragments->disk_count != set.size()) {
    throw Error(ErrorCode::StaleCache, "set was modified after the forward pass");
  }
  check_target(r, target, mask);
  const std::size_t n = count_mask(r, mask);
  if (n == 0) throw Error(ErrorCode::EmptyMask, "photometric loss over an empty mask");

  const std::size_t nd = set.size();
  std::vector<std::uint8_t> is_active(nd, 0);
  for (std::uint32_t i : active) {
    if (i >= nd) throw Error(ErrorCode::InvalidArgument, "active index out of range");
    is_active[i] = 1;
  }
  const FragmentGeometry& fg = *r.fragments;
  const Appearance a = gather(set);
  const double scale = 1.0 / (3.0 * static_cast<double>(n));

  // Fixed row bands with private accumulators, reduced in band order, so
  // the result does not depend on the thread count.
  const int bands = std::min(16, fg.height);
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(bands));
  std::vector<double> row_loss(static_cast<std::size_t>(fg.height), 0.0);

#pragma omp parallel num_threads(resolve_threads(threads))
  {
    std::vector<double> tbuf, abuf;
#pragma omp for schedule(dynamic, 1)
    for (int band = 0; band < bands; ++band) {
      std::vector<double>& acc = partial[band];
      acc.assign(nd * 4, 0.0);
      const int y0 = band * fg.height / bands, y1 = (band + 1) * fg.height / bands;
      for (int y = y0; y < y1; ++y) {
        double lrow = 0.0;
        for (int x = 0; x < fg.width; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * fg.width + x;
          if (mask && !mask->data[pix]) continue;
          const std::uint32_t b = fg.offsets[pix], e = fg.offsets[pix + 1];
          tbuf.clear();
          abuf.clear();
          double t = 1.0;
          Vec3 c = Vec3::Zero();
          for (std::uint32_t k = b; k < e; ++k) {
            const std::uint32_t i = fg.disk[k];
            const double alpha = a.opacity[i] * fg.falloff[k];
            tbuf.push_back(t);
            abuf.push_back(alpha);
            c += alpha * t * a.color[i];
            t *= 1.0 - alpha;
            if (t < r.cfg.transmittance_stop) break;
          }
          c += t * r.background;
          const Vec3 diff = c - target.data[pix].cast<double>();
          lrow += diff.cwiseAbs().sum();
          Vec3 dldc;
          for (int ch = 0; ch < 3; ++ch) {
            dldc[ch] = scale * static_cast<double>((diff[ch] > 0.0) - (diff[ch] < 0.0));
          }
          if (dldc.isZero()) continue;
          Vec3 behind = r.background;
          for (std::size_t kk = tbuf.size(); kk-- > 0;) {
            const std::uint32_t k = b + static_cast<std::uint32_t>(kk);
            const std::uint32_t i = fg.disk[k];
            const double alpha = abuf[kk], tk = tbuf[kk];
            if (is_active[i]) {
              const Vec3 gc = dldc * (alpha * tk);
              acc[4 * i] += gc.x();
              acc[4 * i + 1] += gc.y();
              acc[4 * i + 2] += gc.z();
              acc[4 * i + 3] += dldc.dot(tk * (a.color[i] - behind)) * fg.falloff[k];
            }
            behind = alpha * a.color[i] + (1.0 - alpha) * behind;
          }
        }
        row_loss[y] = lrow;
      }
    }
  }

  AppearanceGradient g;
  g.d_color.assign(nd, Vec3::Zero());
  g.d_opacity.assign(nd, 0.0);
  for (int band = 0; band < bands; ++band) {
    const std::vector<double>& acc = partial[band];
    for (std::size_t i = 0; i < nd; ++i) {
      if (!is_active[i]) continue;
      g.d_color[i] += Vec3(acc[4 * i], acc[4 * i + 1], acc[4 * i + 2]);
      g.d_opacity[i] += acc[4 * i + 3];
    }
  }
  double total = 0.0;
  for (double s : row_loss) total += s;
  g.loss = total * scale;
  return g;
}

}  // namespace ggrow
