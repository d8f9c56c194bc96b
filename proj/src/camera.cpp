// SPDX-License-Identifier: Apache-2.0

#include "ggrow/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ggrow {

CameraPose CameraPose::look_at_origin(const Vec3& position, const Intrinsics& intr) {
  if (!position.allFinite() || position.norm() <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "camera position must be finite and nonzero");
  }
  if (!(intr.fov_y > 0.0 && intr.fov_y < std::numbers::pi) || intr.width <= 0 ||
      intr.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "invalid intrinsics");
  }
  CameraPose c;
  c.position_ = position;
  c.intr_ = intr;
  c.forward_ = -position.normalized();
  Vec3 world_up = Vec3::UnitZ();
  if (std::abs(c.forward_.dot(world_up)) > 0.999) {
    world_up = Vec3::UnitX();
    c.up_fallback_ = true;
  }
  c.right_ = c.forward_.cross(world_up).normalized();
  c.up_ = c.right_.cross(c.forward_);
  return c;
}

CameraPose CameraPose::from_spherical(double azimuth, double elevation, double radius,
                                      const Intrinsics& intr) {
  if (std::abs(elevation) > 0.5 * std::numbers::pi + 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "|elevation| must be <= pi/2");
  }
  const Vec3 p(std::cos(elevation) * std::cos(azimuth),
               std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
  return look_at_origin(radius * p, intr);
}

Mat3 CameraPose::rotation() const {
  Mat3 r;
  r.row(0) = right_.transpose();
  r.row(1) = up_.transpose();
  r.row(2) = -forward_.transpose();
  return r;
}

Eigen::Matrix4d CameraPose::view_matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  const Mat3 r = rotation();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = -r * position_;
  return m;
}

Vec3 CameraPose::to_camera(const Vec3& world) const { return rotation() * (world - position_); }

std::optional<Vec2> CameraPose::project(const Vec3& world) const {
  const Vec3 d = world - position_;
  const double z = forward_.dot(d);
  if (z <= 0.0) return std::nullopt;
  const double f = intr_.focal_px();
  return Vec2(intr_.cx() + f * right_.dot(d) / z, intr_.cy() - f * up_.dot(d) / z);
}

Vec3 CameraPose::pixel_ray(double px, double py) const {
  const double f = intr_.focal_px();
  const double x = (px - intr_.cx()) / f;
  const double y = -(py - intr_.cy()) / f;
  return (forward_ + x * right_ + y * up_).normalized();
}

std::array<CameraPose, 6> cardinal_views(double radius, const Intrinsics& intr,
                                         double azimuth_offset) {
  constexpr double h = 0.5 * std::numbers::pi;
  return {CameraPose::from_spherical(azimuth_offset + 0 * h, 0.0, radius, intr),
          CameraPose::from_spherical(azimuth_offset + 1 * h, 0.0, radius, intr),
          CameraPose::from_spherical(azimuth_offset + 2 * h, 0.0, radius, intr),
          CameraPose::from_spherical(azimuth_offset + 3 * h, 0.0, radius, intr),
          CameraPose::from_spherical(0.0, h, radius, intr),
          CameraPose::from_spherical(0.0, -h, radius, intr)};
}

GeometryMaps render_geometry_maps(const UnsignedField& field, const CameraPose& pose,
                                  int threads) {
  const int w = pose.intrinsics().width, h = pose.intrinsics().height;
  GeometryMaps m;
  m.depth = Raster<float>(w, h, 0.0f);
  m.normal = Raster<Eigen::Vector3f>(w, h, Eigen::Vector3f::Zero());
  m.position = Raster<Eigen::Vector3f>(w, h, Eigen::Vector3f::Zero());
  m.hit_mask = Mask(w, h, 0);
  const double t_max = pose.sphere_radius() + 2.0 * field.source().bounding_radius +
                       4.0 * field.hit_eps();

#pragma omp parallel for schedule(dynamic, 4) num_threads(resolve_threads(threads))
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 dir = pose.pixel_ray(x + 0.5, y + 0.5);
      const auto hit = field.sphere_trace(pose.position(), dir, t_max);
      if (!hit) continue;
      Vec3 n = field.normal_at(hit->surface).normal;
      if (n.dot(dir) > 0.0) n = -n;
      m.depth.at(x, y) = static_cast<float>(pose.depth(hit->surface));
      m.normal.at(x, y) = n.cast<float>();
      m.position.at(x, y) = hit->surface.cast<float>();
      m.hit_mask.at(x, y) = 1;
    }
  }
  return m;
}

DepthRange default_depth_range(const CameraPose& pose) {
  return {0.0, pose.sphere_radius() + 1.0};
}

Gray16 encode_depth(const GeometryMaps& maps, const DepthRange& range) {
  Gray16 out(maps.width(), maps.height(), 0);
  const double span = range.far - range.near;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!maps.hit_mask.data[i]) continue;
    const double v = std::clamp((maps.depth.data[i] - range.near) / span, 0.0, 1.0);
    out.data[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  return out;
}

namespace {

std::uint8_t unit_to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image8 encode_normals(const GeometryMaps& maps) {
  Image8 out(maps.width(), maps.height(), Rgb8{0, 0, 0});
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!maps.hit_mask.data[i]) continue;
    for (int c = 0; c < 3; ++c) out.data[i][c] = unit_to_byte(0.5 * (maps.normal.data[i][c] + 1.0));
  }
  return out;
}

Raster<Eigen::Vector3f> decode_normals(const Image8& img) {
  Raster<Eigen::Vector3f> out(img.width, img.height, Eigen::Vector3f::Zero());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int c = 0; c < 3; ++c) out.data[i][c] = img.data[i][c] / 255.0f * 2.0f - 1.0f;
  }
  return out;
}

Image8 encode_positions(const GeometryMaps& maps, double bound) {
  Image8 out(maps.width(), maps.height(), Rgb8{0, 0, 0});
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!maps.hit_mask.data[i]) continue;
    for (int c = 0; c < 3; ++c) {
      out.data[i][c] = unit_to_byte(0.5 * (maps.position.data[i][c] / bound + 1.0));
    }
  }
  return out;
}

std::vector<std::uint8_t> raw_f32(const Raster<float>& r) {
  std::vector<std::uint8_t> out(r.size() * sizeof(float));
  std::memcpy(out.data(), r.data.data(), out.size());
  return out;
}

std::vector<std::uint8_t> raw_f32(const Raster<Eigen::Vector3f>& r) {
  std::vector<std::uint8_t> out(r.size() * 3 * sizeof(float));
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::memcpy(out.data() + i * 12, r.data[i].data(), 12);
  }
  return out;
}

}  // namespace ggrow
