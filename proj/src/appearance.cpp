// SPDX-License-Identifier: Apache-2.0

#include "ggrow/appearance.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace ggrow {

namespace {

using nlohmann::json;

const Rgb kWhite = Rgb::Ones();

void require_same(int w, int h, int ow, int oh, const char* what) {
  if (w != ow || h != oh) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("view bundle: ") + what + " size differs from the geometry maps");
  }
}

Image8 mask_to_rgb8(const Mask& m) {
  Image8 out(m.width, m.height, Rgb8{0, 0, 0});
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.data[i]) out.data[i] = Rgb8{255, 255, 255};
  }
  return out;
}

Mask rgb8_to_mask(const Image8& img) {
  Mask out(img.width, img.height, 0);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = img.data[i][0] > 127 ? 1 : 0;
  return out;
}

std::string b64(const std::vector<std::uint8_t>& bytes) { return base64_encode(bytes); }

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::Protocol, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Raster<Eigen::Vector3f> decode_f32_vec3(const std::vector<std::uint8_t>& bytes, int w, int h) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != n * 3 * sizeof(float)) {
    throw Error(ErrorCode::Protocol, "position buffer has the wrong size");
  }
  Raster<Eigen::Vector3f> out(w, h, Eigen::Vector3f::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(out.data[i].data(), bytes.data() + i * 3 * sizeof(float), 3 * sizeof(float));
  }
  return out;
}

json view_json(const ViewBundle& b) {
  const GeometryMaps& m = b.maps;
  const DepthRange range = default_depth_range(b.pose);
  json v = {{"width", m.width()},
            {"height", m.height()},
            {"camera",
             {{"position", vec_json(b.pose.position())},
              {"fov", b.pose.intrinsics().fov_y},
              {"up", vec_json(b.pose.up())}}},
            {"depth_near", range.near},
            {"depth_far", range.far},
            {"depth_png_b16", b64(encode_png(encode_depth(m, range)))},
            {"normal_png_rgb", b64(encode_png(encode_normals(m)))},
            {"position_exr_or_raw_f32_b64", b64(raw_f32(m.position))}};
  if (b.target) v["image_png"] = b64(encode_png(to_rgb8(*b.target)));
  if (b.mask) v["mask_png"] = b64(encode_png(mask_to_rgb8(*b.mask)));
  return v;
}

/// "http://host:port/path" -> ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::Config, "backend url lacks a scheme: '" + url + "'");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw Error(ErrorCode::Config, "backend url scheme '" + scheme + "' is not supported");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

void check_images(const std::vector<Image8>& images, std::span<const ViewBundle> bundles) {
  if (images.size() != bundles.size()) {
    throw Error(ErrorCode::Protocol, "backend returned " + std::to_string(images.size()) +
                                         " images for " + std::to_string(bundles.size()) +
                                         " views");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(bundles[i].maps.width(), bundles[i].maps.height())) {
      throw Error(ErrorCode::Protocol, "backend image " + std::to_string(i) + " has the wrong size");
    }
  }
}

}  // namespace

void validate(const ViewBundle& b) {
  const int w = b.maps.width(), h = b.maps.height();
  const GeometryMaps& m = b.maps;
  require_same(m.normal.width, m.normal.height, w, h, "normal map");
  require_same(m.position.width, m.position.height, w, h, "position map");
  require_same(m.hit_mask.width, m.hit_mask.height, w, h, "hit mask");
  if (b.target) require_same(b.target->width, b.target->height, w, h, "target");
  if (b.mask) require_same(b.mask->width, b.mask->height, w, h, "mask");
}

Vec3 oracle_color(const Vec3& p) {
  return Vec3(0.5 + 0.5 * std::sin(4.0 * p.x()), 0.5 + 0.5 * std::sin(4.0 * p.y()),
              0.5 + 0.5 * std::sin(4.0 * p.z()));
}

Image oracle_image(const GeometryMaps& maps) {
  Image out(maps.width(), maps.height(), kWhite);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (maps.hit_mask.data[i]) out.data[i] = oracle_color(maps.position.data[i].cast<double>()).cast<float>();
  }
  return out;
}

Image AppearanceBackend::inpaint(const ViewBundle& bundle) {
  if (!bundle.target) throw Error(ErrorCode::Precondition, "inpaint: bundle has no target");
  if (!bundle.mask) throw Error(ErrorCode::Precondition, "inpaint: bundle has no mask");
  validate(bundle);
  bool any = false;
  for (std::uint8_t v : bundle.mask->data) any = any || v != 0;
  if (!any) throw Error(ErrorCode::EmptyMask, "inpaint: mask has no true pixel");
  const Image raw = inpaint_raw(bundle);
  if (!raw.same_shape(*bundle.target)) {
    throw Error(ErrorCode::Protocol, "inpaint: backend image has the wrong size");
  }
  Image out = *bundle.target;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bundle.mask->data[i]) out.data[i] = raw.data[i];
  }
  return out;
}

Image ProceduralBackend::synthesize_reference(const ViewBundle& bundle) {
  if (bundle.maps.depth.size() == 0) {
    throw Error(ErrorCode::Precondition, "reference: bundle has no depth map");
  }
  validate(bundle);
  return oracle_image(bundle.maps);
}

std::vector<Image> ProceduralBackend::synthesize_multiview(std::span<const ViewBundle> bundles,
                                                           const Image&) {
  std::vector<Image> out;
  out.reserve(bundles.size());
  for (const ViewBundle& b : bundles) {
    validate(b);
    out.push_back(oracle_image(b.maps));
  }
  return out;
}

Image ProceduralBackend::inpaint_raw(const ViewBundle& bundle) { return oracle_image(bundle.maps); }

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  split_url(cfg_.url);
  if (cfg_.retries < 0) throw Error(ErrorCode::Config, "remote backend: retries must be >= 0");
  if (!(cfg_.timeout_s > 0.0)) throw Error(ErrorCode::Config, "remote backend: timeout must be > 0");
}

Image RemoteBackend::synthesize_reference(const ViewBundle& bundle) {
  if (bundle.maps.depth.size() == 0) {
    throw Error(ErrorCode::Precondition, "reference: bundle has no depth map");
  }
  return call("reference", std::span<const ViewBundle>(&bundle, 1), nullptr).front();
}

std::vector<Image> RemoteBackend::synthesize_multiview(std::span<const ViewBundle> bundles,
                                                       const Image& reference) {
  return call("multiview", bundles, &reference);
}

Image RemoteBackend::inpaint_raw(const ViewBundle& bundle) {
  return call("inpaint", std::span<const ViewBundle>(&bundle, 1), nullptr).front();
}

std::vector<Image> RemoteBackend::call(const std::string& mode,
                                       std::span<const ViewBundle> bundles,
                                       const Image* reference) {
  for (const ViewBundle& b : bundles) validate(b);
  const std::string body = encode_request(mode, bundles, reference);
  const auto [host, path] = split_url(cfg_.url);
  const int attempts = cfg_.retries + 1;
  std::string last_error;
  double backoff = cfg_.backoff_s;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(host);
    const auto secs = std::chrono::duration<double>(cfg_.timeout_s);
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
    client.set_connection_timeout(us);
    client.set_read_timeout(us);
    client.set_write_timeout(us);
    const httplib::Result res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw Error(ErrorCode::Backend, "backend " + mode + " request rejected with HTTP " +
                                          std::to_string(res->status));
    } else {
      const std::vector<Image8> images = decode_response(res->body);
      check_images(images, bundles);
      std::vector<Image> out;
      for (const Image8& img : images) out.push_back(from_rgb8(img));
      return out;
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
  }
  throw Error(ErrorCode::Backend, "backend " + mode + " request failed after " +
                                      std::to_string(attempts) + " attempts (" +
                                      std::to_string(cfg_.retries) + " retries): " + last_error);
}

std::unique_ptr<AppearanceBackend> make_backend(const std::string& kind, const std::string& url) {
  RemoteConfig rc;
  rc.url = url;
  return make_backend(kind, rc);
}

std::unique_ptr<AppearanceBackend> make_backend(const std::string& kind, RemoteConfig remote) {
  if (kind == "procedural") return std::make_unique<ProceduralBackend>();
  if (kind == "remote") {
    std::string& u = remote.url;
    if (u.empty()) {
      const char* env = std::getenv(kBackendUrlEnv);
      if (env != nullptr) u = env;
    }
    if (u.empty()) {
      throw Error(ErrorCode::Config, std::string("remote backend needs a URL (set backend_url or ") +
                                         kBackendUrlEnv + ")");
    }
    return std::make_unique<RemoteBackend>(std::move(remote));
  }
  throw Error(ErrorCode::Config, "unknown backend '" + kind + "' (procedural | remote)");
}

std::string encode_request(const std::string& mode, std::span<const ViewBundle> bundles,
                           const Image* reference) {
  json views = json::array();
  for (const ViewBundle& b : bundles) views.push_back(view_json(b));
  json req = {{"prompt", bundles.empty() ? std::string() : bundles.front().prompt},
              {"mode", mode},
              {"views", std::move(views)}};
  if (reference != nullptr) req["reference_png"] = b64(encode_png(to_rgb8(*reference)));
  return req.dump();
}

WireRequest decode_request(const std::string& body) {
  try {
    const json j = json::parse(body);
    WireRequest r;
    r.prompt = j.at("prompt").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    if (j.contains("reference_png")) {
      r.reference = decode_png_rgb8(base64_decode(j["reference_png"].get<std::string>()));
    }
    for (const json& v : j.at("views")) {
      WireView w;
      w.width = v.at("width").get<int>();
      w.height = v.at("height").get<int>();
      w.position = json_vec(v.at("camera").at("position"));
      w.up = json_vec(v.at("camera").at("up"));
      w.fov = v.at("camera").at("fov").get<double>();
      w.depth_near = v.at("depth_near").get<double>();
      w.depth_far = v.at("depth_far").get<double>();
      w.depth = decode_png_gray16(base64_decode(v.at("depth_png_b16").get<std::string>()));
      w.normal = decode_png_rgb8(base64_decode(v.at("normal_png_rgb").get<std::string>()));
      w.position_map = decode_f32_vec3(
          base64_decode(v.at("position_exr_or_raw_f32_b64").get<std::string>()), w.width,
          w.height);
      if (v.contains("image_png")) {
        w.image = decode_png_rgb8(base64_decode(v["image_png"].get<std::string>()));
      }
      if (v.contains("mask_png")) {
        w.mask = rgb8_to_mask(decode_png_rgb8(base64_decode(v["mask_png"].get<std::string>())));
      }
      r.views.push_back(std::move(w));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Protocol, std::string("malformed request: ") + e.what());
  }
}

std::string encode_response(std::span<const Image8> images) {
  json arr = json::array();
  for (const Image8& img : images) arr.push_back(b64(encode_png(img)));
  return json{{"images", std::move(arr)}}.dump();
}

std::vector<Image8> decode_response(const std::string& body) {
  std::vector<Image8> out;
  try {
    const json j = json::parse(body);
    for (const json& img : j.at("images")) {
      out.push_back(decode_png_rgb8(base64_decode(img.get<std::string>())));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Protocol, std::string("malformed response: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Protocol) throw;
    throw Error(ErrorCode::Protocol, std::string("undecodable response image: ") + e.what());
  }
  return out;
}

}  // namespace ggrow
