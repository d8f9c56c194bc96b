// SPDX-License-Identifier: Apache-2.0
//
// Shared vocabulary types: vectors, rasters, errors, thread-count helper.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ggrow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Rgb = Eigen::Vector3f;

enum class ErrorCode {
  TooFewPoints,
  MalformedHeader,
  BadPropertyType,
  TruncatedData,
  NonFinite,
  Degenerate,
  Io,
  InvalidArgument,
  Precondition,
  StaleCache,
  EmptyMask,
  NothingToPropagate,
  Backend,
  Protocol,
  Config,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Row-major H×W grid of T.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, const T& fill = T())
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  size_t size() const { return data.size(); }
  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <typename U>
  bool same_shape(const Raster<U>& o) const {
    return width == o.width && height == o.height;
  }
};

using Image = Raster<Rgb>;
/// uint8_t rather than bool so rows stay addressable and thread-safe to write.
using Mask = Raster<std::uint8_t>;

/// Resolves a user thread request (0 = hardware default) to an OpenMP count.
int resolve_threads(int requested);

/// Number of hardware threads reported by the OpenMP runtime.
int hardware_threads();

}  // namespace ggrow
