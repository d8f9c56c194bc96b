// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include "ggrow/appearance.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <random>
#include <thread>

using namespace ggrow;

namespace {

GeometryMaps random_maps(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::bernoulli_distribution hit(0.8);
  GeometryMaps m;
  m.depth = Raster<float>(w, h, 0.0f);
  m.normal = Raster<Eigen::Vector3f>(w, h, Eigen::Vector3f::Zero());
  m.position = Raster<Eigen::Vector3f>(w, h, Eigen::Vector3f::Zero());
  m.hit_mask = Mask(w, h, 0);
  for (std::size_t i = 0; i < m.depth.size(); ++i) {
    if (!hit(rng)) continue;
    m.hit_mask.data[i] = 1;
    m.position.data[i] = Eigen::Vector3f(u(rng), u(rng), u(rng));
    m.depth.data[i] = 2.0f + 0.5f * u(rng);
    m.normal.data[i] = Eigen::Vector3f(u(rng), u(rng), 1.0f).normalized();
  }
  return m;
}

ViewBundle bundle_of(GeometryMaps maps) {
  ViewBundle b;
  b.pose = CameraPose::from_spherical(0.3, 0.2, 2.5, Intrinsics{45.0 * std::numbers::pi / 180,
                                                                 maps.width(), maps.height()});
  b.maps = std::move(maps);
  b.prompt = "a test object";
  return b;
}

Mask random_mask(int w, int h, std::uint64_t seed, double p) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(p);
  Mask m(w, h, 0);
  for (auto& v : m.data) v = on(rng) ? 1 : 0;
  return m;
}

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h);
  for (auto& c : img.data) c = Rgb(u(rng), u(rng), u(rng));
  return img;
}

bool bitwise_equal(const Image& a, const Image& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(Rgb)) == 0;
}

/// Local stand-in for a synthesis service: answers every request with the
/// oracle evaluated on the transmitted position buffer.
class OracleServer {
 public:
  explicit OracleServer(int fail_first = 0, bool drop_one = false)
      : fail_first_(fail_first), drop_one_(drop_one) {
    server_.Post("/synth", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (requests_ <= fail_first_) {
        res.status = 503;
        return;
      }
      const WireRequest r = decode_request(req.body);
      last_mode_ = r.mode;
      std::vector<Image8> out;
      for (const WireView& v : r.views) {
        GeometryMaps m;
        m.depth = Raster<float>(v.width, v.height, 0.0f);
        m.hit_mask = Mask(v.width, v.height, 0);
        m.position = v.position_map;
        for (std::size_t i = 0; i < m.hit_mask.size(); ++i) m.hit_mask.data[i] = v.depth.data[i] > 0;
        out.push_back(to_rgb8(oracle_image(m)));
      }
      if (drop_one_ && !out.empty()) out.pop_back();
      res.set_content(encode_response(out), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~OracleServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/synth"; }
  int requests() const { return requests_; }
  std::string last_mode() const { return last_mode_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::string last_mode_;
  int fail_first_;
  bool drop_one_;
};

RemoteConfig fast(const std::string& url, int retries = 2) {
  RemoteConfig c;
  c.url = url;
  c.timeout_s = 5.0;
  c.retries = retries;
  c.backoff_s = 0.01;
  return c;
}

}  // namespace

TEST_CASE("procedural reference is the oracle with a white background") {
  ProceduralBackend be;
  const ViewBundle b = bundle_of(random_maps(17, 11, 1));
  const Image img = be.synthesize_reference(b);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (b.maps.hit_mask.data[i]) {
      const Vec3 p = b.maps.position.data[i].cast<double>();
      const Rgb want(static_cast<float>(0.5 + 0.5 * std::sin(4 * p.x())),
                     static_cast<float>(0.5 + 0.5 * std::sin(4 * p.y())),
                     static_cast<float>(0.5 + 0.5 * std::sin(4 * p.z())));
      CHECK((img.data[i] - want).norm() == 0.0f);
    } else {
      CHECK(img.data[i] == Rgb::Ones());
    }
  }
  CHECK(bitwise_equal(img, be.synthesize_reference(b)));

  ViewBundle no_depth = b;
  no_depth.maps.depth = Raster<float>();
  CHECK_THROWS_AS(be.synthesize_reference(no_depth), Error);
}

TEST_CASE("procedural multiview is position keyed") {
  ProceduralBackend be;
  GeometryMaps a = random_maps(8, 8, 2), c = random_maps(8, 6, 3);
  // The same surface point seen through different pixels.
  a.hit_mask.at(1, 2) = c.hit_mask.at(5, 4) = 1;
  a.position.at(1, 2) = c.position.at(5, 4) = Eigen::Vector3f(0.3f, -0.2f, 0.7f);
  const std::vector<ViewBundle> views = {bundle_of(a), bundle_of(c)};
  const Image ref = be.synthesize_reference(views[0]);
  const auto out = be.synthesize_multiview(views, ref);
  REQUIRE(out.size() == 2);
  CHECK(out[0].same_shape(8, 8));
  CHECK(out[1].same_shape(8, 6));
  CHECK((out[0].at(1, 2) - out[1].at(5, 4)).norm() < 1e-6f);
  for (std::size_t v = 0; v < views.size(); ++v) {
    CHECK(bitwise_equal(out[v], be.synthesize_reference(views[v])));
  }
}

TEST_CASE("inpaint composites under the mask") {
  ProceduralBackend be;
  ViewBundle b = bundle_of(random_maps(20, 14, 4));
  b.target = random_image(20, 14, 5);
  b.mask = Mask(20, 14, 0);
  CHECK_THROWS_AS(be.inpaint(b), Error);
  try {
    be.inpaint(b);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyMask);
  }

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    b.mask = random_mask(20, 14, 100 + seed, 0.3);
    b.mask->data[0] = 1;
    const Image out = be.inpaint(b);
    const Image oracle = oracle_image(b.maps);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (b.mask->data[i]) {
        CHECK(out.data[i] == oracle.data[i]);
      } else {
        CHECK(std::memcmp(&out.data[i], &b.target->data[i], sizeof(Rgb)) == 0);
      }
    }
  }

  ViewBundle no_target = b;
  no_target.target.reset();
  CHECK_THROWS_AS(be.inpaint(no_target), Error);
  ViewBundle wrong = b;
  wrong.mask = Mask(3, 3, 1);
  CHECK_THROWS_AS(be.inpaint(wrong), Error);
}

TEST_CASE("base64 round trip") {
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const std::string text = base64_encode(bytes);
    CHECK(text.size() % 4 == 0);
    CHECK(base64_decode(text) == bytes);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  CHECK_THROWS_AS(base64_decode("Zm9"), Error);
  CHECK_THROWS_AS(base64_decode("Zm9v!A=="), Error);
}

TEST_CASE("wire request round trip") {
  ViewBundle b = bundle_of(random_maps(13, 9, 6));
  b.target = from_rgb8(to_rgb8(random_image(13, 9, 7)));
  b.mask = random_mask(13, 9, 8, 0.5);
  const Image ref = from_rgb8(to_rgb8(random_image(13, 9, 9)));
  const WireRequest r = decode_request(encode_request("inpaint", std::span(&b, 1), &ref));
  CHECK(r.mode == "inpaint");
  CHECK(r.prompt == b.prompt);
  REQUIRE(r.views.size() == 1);
  const WireView& v = r.views[0];
  CHECK(v.width == 13);
  CHECK(v.height == 9);
  CHECK((v.position - b.pose.position()).norm() == 0.0);
  CHECK((v.up - b.pose.up()).norm() == 0.0);
  CHECK(v.fov == b.pose.intrinsics().fov_y);
  const DepthRange range = default_depth_range(b.pose);
  CHECK(v.depth_near == range.near);
  CHECK(v.depth_far == range.far);
  CHECK(v.depth.data == encode_depth(b.maps, range).data);
  CHECK(v.normal.data == encode_normals(b.maps).data);
  for (std::size_t i = 0; i < v.position_map.size(); ++i) {
    CHECK(std::memcmp(v.position_map.data[i].data(), b.maps.position.data[i].data(),
                      3 * sizeof(float)) == 0);
  }
  REQUIRE(v.image);
  CHECK(v.image->data == to_rgb8(*b.target).data);
  REQUIRE(v.mask);
  CHECK(v.mask->data == b.mask->data);
  REQUIRE(r.reference);
  CHECK(r.reference->data == to_rgb8(ref).data);

  CHECK_THROWS_AS(decode_request("{not json"), Error);
  CHECK_THROWS_AS(decode_response("{\"images\": [\"AAAA\"]}"), Error);
  CHECK_THROWS_AS(decode_response("[]"), Error);
}

TEST_CASE("remote backend against a local oracle server") {
  OracleServer server;
  RemoteBackend remote(fast(server.url()));
  ProceduralBackend local;
  std::vector<ViewBundle> views = {bundle_of(random_maps(16, 12, 10)),
                                   bundle_of(random_maps(9, 9, 11))};
  const Image ref = remote.synthesize_reference(views[0]);
  CHECK(server.last_mode() == "reference");
  CHECK(to_rgb8(ref).data == to_rgb8(local.synthesize_reference(views[0])).data);

  const auto mv = remote.synthesize_multiview(views, ref);
  CHECK(server.last_mode() == "multiview");
  REQUIRE(mv.size() == 2);
  for (std::size_t v = 0; v < 2; ++v) {
    CHECK(to_rgb8(mv[v]).data == to_rgb8(oracle_image(views[v].maps)).data);
  }

  views[0].target = random_image(16, 12, 12);
  views[0].mask = random_mask(16, 12, 13, 0.4);
  views[0].mask->data[0] = 1;
  const Image ip = remote.inpaint(views[0]);
  CHECK(server.last_mode() == "inpaint");
  for (std::size_t i = 0; i < ip.size(); ++i) {
    if (!views[0].mask->data[i]) {
      CHECK(std::memcmp(&ip.data[i], &views[0].target->data[i], sizeof(Rgb)) == 0);
    }
  }
}

TEST_CASE("remote backend retries and protocol errors") {
  const ViewBundle b = bundle_of(random_maps(6, 5, 14));
  SUBCASE("two transient failures are absorbed by two retries") {
    OracleServer flaky(2);
    RemoteBackend remote(fast(flaky.url(), 2));
    CHECK_NOTHROW(remote.synthesize_reference(b));
    CHECK(flaky.requests() == 3);
  }
  SUBCASE("retries exhausted") {
    OracleServer flaky(5);
    RemoteBackend remote(fast(flaky.url(), 1));
    try {
      remote.synthesize_reference(b);
      FAIL("expected a backend error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Backend);
      CHECK(std::string(e.what()).find("2 attempts") != std::string::npos);
    }
    CHECK(flaky.requests() == 2);
  }
  SUBCASE("count mismatch is a protocol error") {
    OracleServer short_server(0, true);
    RemoteBackend remote(fast(short_server.url(), 2));
    const std::vector<ViewBundle> two = {b, b};
    try {
      remote.synthesize_multiview(two, Image(6, 5, Rgb::Ones()));
      FAIL("expected a protocol error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Protocol);
    }
    CHECK(short_server.requests() == 1);
  }
  SUBCASE("unreachable service") {
    int port = 0;
    {
      httplib::Server s;
      port = s.bind_to_any_port("127.0.0.1");
    }
    RemoteConfig cfg = fast("http://127.0.0.1:" + std::to_string(port) + "/", 2);
    cfg.timeout_s = 1.0;
    RemoteBackend remote(cfg);
    try {
      remote.synthesize_reference(b);
      FAIL("expected a backend error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Backend);
      CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
  }
}

TEST_CASE("make_backend") {
  CHECK(make_backend("procedural")->name() == "procedural");
  CHECK_THROWS_AS(make_backend("diffusion"), Error);
  CHECK_THROWS_AS(make_backend("remote", "ftp://x"), Error);
  ::unsetenv(kBackendUrlEnv);
  CHECK_THROWS_AS(make_backend("remote"), Error);
  ::setenv(kBackendUrlEnv, "http://127.0.0.1:9/", 1);
  CHECK(make_backend("remote")->name() == "remote");
  ::unsetenv(kBackendUrlEnv);
}
