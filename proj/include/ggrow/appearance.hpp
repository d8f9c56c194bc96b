// SPDX-License-Identifier: Apache-2.0
//
// View-synthesis backends: a deterministic procedural color oracle keyed on
// world position, and an HTTP client for a remote synthesis service.

#pragma once

#include "ggrow/camera.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ggrow {

struct ViewBundle {
  CameraPose pose = CameraPose::look_at_origin(Vec3(2.5, 0, 0), Intrinsics{});
  GeometryMaps maps;
  std::string prompt;
  std::optional<Image> reference;
  std::optional<Image> target;
  std::optional<Mask> mask;
};

/// Throws InvalidArgument when raster fields disagree in size.
void validate(const ViewBundle& b);

/// (0.5 + 0.5 sin 4x, 0.5 + 0.5 sin 4y, 0.5 + 0.5 sin 4z).
Vec3 oracle_color(const Vec3& p);

class AppearanceBackend {
 public:
  virtual ~AppearanceBackend() = default;
  virtual std::string name() const = 0;

  /// Reference image from the bundle's depth map; misses are white.
  virtual Image synthesize_reference(const ViewBundle& bundle) = 0;
  /// One image per bundle, in order.
  virtual std::vector<Image> synthesize_multiview(std::span<const ViewBundle> bundles,
                                                  const Image& reference) = 0;
  /// Backend output composited under the mask: pixels outside the mask are
  /// copied from the target unchanged. Throws EmptyMask / Precondition.
  Image inpaint(const ViewBundle& bundle);

 protected:
  virtual Image inpaint_raw(const ViewBundle& bundle) = 0;
};

/// Oracle colors from the position map at hit pixels, white elsewhere.
/// Stateless, so concurrent calls are safe.
class ProceduralBackend final : public AppearanceBackend {
 public:
  std::string name() const override { return "procedural"; }
  Image synthesize_reference(const ViewBundle& bundle) override;
  std::vector<Image> synthesize_multiview(std::span<const ViewBundle> bundles,
                                          const Image& reference) override;

 protected:
  Image inpaint_raw(const ViewBundle& bundle) override;
};

Image oracle_image(const GeometryMaps& maps);

struct RemoteConfig {
  std::string url;  ///< http://host[:port][/path]
  double timeout_s = 300.0;
  int retries = 2;
  double backoff_s = 1.0;  ///< doubled after each failed attempt
};

/// One POST per call with the JSON wire protocol. Transport failures and
/// 5xx responses are retried; malformed responses raise Protocol at once.
class RemoteBackend final : public AppearanceBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  std::string name() const override { return "remote"; }
  Image synthesize_reference(const ViewBundle& bundle) override;
  std::vector<Image> synthesize_multiview(std::span<const ViewBundle> bundles,
                                          const Image& reference) override;

 protected:
  Image inpaint_raw(const ViewBundle& bundle) override;

 private:
  std::vector<Image> call(const std::string& mode, std::span<const ViewBundle> bundles,
                          const Image* reference);
  RemoteConfig cfg_;
};

inline constexpr const char* kBackendUrlEnv = "GGROW_BACKEND_URL";

/// "procedural" or "remote"; an empty remote URL falls back to the
/// GGROW_BACKEND_URL environment variable. Throws Config.
std::unique_ptr<AppearanceBackend> make_backend(const std::string& kind,
                                                const std::string& url = "");
std::unique_ptr<AppearanceBackend> make_backend(const std::string& kind, RemoteConfig remote);

// Wire protocol, exposed for servers and tests.

struct WireView {
  int width = 0, height = 0;
  Vec3 position = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();
  double fov = 0.0;
  double depth_near = 0.0, depth_far = 1.0;
  Gray16 depth;
  Image8 normal;
  Raster<Eigen::Vector3f> position_map;
  std::optional<Image8> image;
  std::optional<Mask> mask;
};

struct WireRequest {
  std::string prompt;
  std::string mode;
  std::vector<WireView> views;
  std::optional<Image8> reference;
};

std::string encode_request(const std::string& mode, std::span<const ViewBundle> bundles,
                           const Image* reference);
WireRequest decode_request(const std::string& body);
std::string encode_response(std::span<const Image8> images);
/// Throws Protocol on malformed JSON, bad base64 or undecodable PNG.
std::vector<Image8> decode_response(const std::string& body);

}  // namespace ggrow
