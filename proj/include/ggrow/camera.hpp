// SPDX-License-Identifier: Apache-2.0
//
// Sphere-constrained look-at cameras and geometry-map rendering.
//
// Camera space follows the OpenGL convention: x right, y up, the camera
// looks down -z. Depth is the distance along the view axis (-z_cam).
// Pixel (u, v) has u to the right and v downward; pixel centers sit at
// integer + 0.5.

#pragma once

#include "ggrow/common.hpp"
#include "ggrow/distance_field.hpp"
#include "ggrow/image_io.hpp"

#include <array>
#include <numbers>
#include <optional>

namespace ggrow {

struct Intrinsics {
  double fov_y = 45.0 * std::numbers::pi / 180.0;
  int width = 512;
  int height = 512;

  double focal_px() const { return 0.5 * height / std::tan(0.5 * fov_y); }
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
};

class CameraPose {
 public:
  /// Camera at `position` looking at the origin.
  static CameraPose look_at_origin(const Vec3& position, const Intrinsics& intr);
  static CameraPose from_spherical(double azimuth, double elevation, double radius,
                                   const Intrinsics& intr);

  const Vec3& position() const { return position_; }
  const Vec3& forward() const { return forward_; }
  const Vec3& right() const { return right_; }
  const Vec3& up() const { return up_; }
  bool up_fallback() const { return up_fallback_; }
  double sphere_radius() const { return position_.norm(); }
  const Intrinsics& intrinsics() const { return intr_; }

  /// World-to-camera rotation (rows: right, up, -forward).
  Mat3 rotation() const;
  Eigen::Matrix4d view_matrix() const;
  Vec3 to_camera(const Vec3& world) const;
  double depth(const Vec3& world) const { return forward_.dot(world - position_); }

  /// Pixel coordinates of a world point, or nothing behind the camera.
  std::optional<Vec2> project(const Vec3& world) const;
  /// Unit world-space direction through pixel coordinates (px, py).
  Vec3 pixel_ray(double px, double py) const;

 private:
  Vec3 position_ = Vec3::UnitX();
  Vec3 forward_ = -Vec3::UnitX();
  Vec3 right_ = Vec3::UnitY();
  Vec3 up_ = Vec3::UnitZ();
  bool up_fallback_ = false;
  Intrinsics intr_;
};

/// +x, +y, -x, -y (elevation 0, azimuths 0, pi/2, pi, 3pi/2), then +z, -z.
std::array<CameraPose, 6> cardinal_views(double radius, const Intrinsics& intr,
                                         double azimuth_offset = 0.0);

struct GeometryMaps {
  Raster<float> depth;  ///< 0 on miss
  Raster<Eigen::Vector3f> normal;    ///< camera-facing unit, zero on miss
  Raster<Eigen::Vector3f> position;  ///< world hit point, zero on miss
  Mask hit_mask;

  int width() const { return depth.width; }
  int height() const { return depth.height; }
};

GeometryMaps render_geometry_maps(const UnsignedField& field, const CameraPose& pose,
                                  int threads = 0);

struct DepthRange {
  double near = 0.0;
  double far = 1.0;
};

/// near = 0, far = sphere radius + 1 (the farthest point of a unit scene).
DepthRange default_depth_range(const CameraPose& pose);

/// Hits map to round(clamp((d - near) / (far - near)) * 65535); misses to 0.
Gray16 encode_depth(const GeometryMaps& maps, const DepthRange& range);
/// [-1, 1] -> [0, 255] per component; misses black.
Image8 encode_normals(const GeometryMaps& maps);
Raster<Eigen::Vector3f> decode_normals(const Image8& img);
/// [-bound, bound] -> [0, 255] per component; misses black.
Image8 encode_positions(const GeometryMaps& maps, double bound = 1.0);

/// Raw little-endian float32 buffers (row-major; 1 or 3 floats per pixel).
std::vector<std::uint8_t> raw_f32(const Raster<float>& r);
std::vector<std::uint8_t> raw_f32(const Raster<Eigen::Vector3f>& r);

}  // namespace ggrow
