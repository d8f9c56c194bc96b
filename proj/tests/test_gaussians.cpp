// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"
#include "ref_splat_reader.hpp"
#include "temp.hpp"

#include "ggrow/cloud_io.hpp"
#include "ggrow/gaussians.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace ggrow;

namespace {

double unsigned_angle_deg(const Vec3& a, const Vec3& b) {
  const double c = std::abs(a.normalized().dot(b.normalized()));
  return std::acos(std::min(c, 1.0)) * 180.0 / std::numbers::pi;
}

GaussianSet init_on(const std::vector<Vec3>& pts) {
  const PointCloud cloud = make_point_cloud(pts);
  const UnsignedField field(cloud);
  return init_from_cloud(cloud, field, estimate_spacing(cloud).spacing);
}

}  // namespace

TEST_CASE("init_from_cloud: planar grid") {
  const double h = 0.04;
  const auto pts = fixtures::planar_grid(25, 25, h);
  const GaussianSet set = init_on(pts);
  REQUIRE(set.size() == pts.size());
  CHECK(set.grown_count() == 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const GaussianDisk& d = set[i];
    CHECK(d.center == pts[i]);
    CHECK(d.source_index == i);
    CHECK(std::abs(d.rotation.norm() - 1.0) < 1e-6);
    CHECK(d.opacity == 0.9);
    CHECK(d.color == Vec3::Constant(0.5));
    CHECK(d.scale.x() == d.scale.y());
    CHECK(d.scale.x() >= kMinScale);
    CHECK(d.scale.x() <= kMaxScale);
  }
  const std::size_t interior = 12 * 25 + 12;
  CHECK(unsigned_angle_deg(set[interior].normal(), Vec3::UnitZ()) < 2.0);
  // Interior k = 8 spacing on a square grid: (4h + 4 sqrt(2) h) / 8.
  CHECK(set[interior].scale.x() == doctest::Approx(h * (1 + std::sqrt(2.0)) / 2).epsilon(1e-9));
}

TEST_CASE("init_from_cloud: sphere normals, orientation, determinism") {
  const auto pts = fixtures::fibonacci_sphere(5000);
  const PointCloud cloud = make_point_cloud(pts);
  const UnsignedField field(cloud);
  const auto spacing = estimate_spacing(cloud).spacing;
  const GaussianSet set = init_from_cloud(cloud, field, spacing, {}, 1);
  REQUIRE(set.size() == 5000);
  std::vector<double> err;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Vec3 n = set[i].normal();
    err.push_back(unsigned_angle_deg(n, pts[i]));
    // Outward orientation whenever the radial component is clear.
    if (std::abs(n.dot(pts[i])) > 0.1) CHECK(n.dot(pts[i]) > 0.0);
    const Vec3 fn = field.normal_at(pts[i]).normal;
    CHECK(std::min((n - fn).norm(), (n + fn).norm()) < 1e-4);
  }
  std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
  CHECK(err[err.size() / 2] < 5.0);

  const GaussianSet again = init_from_cloud(cloud, field, spacing, {}, 3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(again[i].rotation.coeffs() == set[i].rotation.coeffs());
    CHECK(again[i].scale == set[i].scale);
  }
  CHECK_THROWS_AS(init_from_cloud(cloud, field, std::vector<double>(3, 0.1)), Error);
}

TEST_CASE("grown bookkeeping and versions") {
  GaussianSet set = fixtures::sphere_shell(50, 0.1);
  const auto v0 = set.version();
  set.mark_grown(3);
  set.mark_grown(3);
  set.mark_grown(7);
  CHECK(set.grown_count() == 2);
  CHECK(set.grown_indices() == std::vector<std::uint32_t>{3, 7});
  CHECK(set.ungrown_indices().size() == 48);
  CHECK(set.version() != v0);
  const GaussianSet copy = set;
  GaussianSet other = set;
  other.set_color(0, Vec3::Zero());
  CHECK(copy.version() == set.version());
  CHECK(other.version() != set.version());
}

TEST_CASE("spatial_inpaint") {
  SUBCASE("nothing to propagate") {
    GaussianSet set = fixtures::sphere_shell(20, 0.1);
    try {
      spatial_inpaint(set, 1.0);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NothingToPropagate);
    }
  }
  SUBCASE("all grown is a no-op") {
    std::vector<GaussianDisk> disks(4);
    for (int i = 0; i < 4; ++i) {
      disks[i].center = Vec3(i, 0, 0);
      disks[i].grown = true;
    }
    GaussianSet set(disks);
    const auto v = set.version();
    const auto r = spatial_inpaint(set, 5.0);
    CHECK(r.rounds == 0);
    CHECK(r.still_ungrown.empty());
    CHECK(set.version() == v);
  }
  SUBCASE("collinear red / ? / blue") {
    const double h = 0.2;
    std::vector<GaussianDisk> disks(3);
    for (int i = 0; i < 3; ++i) disks[i].center = Vec3(i * h, 0, 0);
    disks[0].color = Vec3(1, 0, 0);
    disks[0].grown = true;
    disks[2].color = Vec3(0, 0, 1);
    disks[2].grown = true;
    GaussianSet set(disks);
    const auto r = spatial_inpaint(set, 1.5 * h);
    CHECK(r.rounds == 1);
    CHECK(set[1].color == Vec3(0.5, 0, 0.5));
    CHECK(set[1].grown);
    CHECK(set.grown_count() == 3);
  }
  SUBCASE("sphere with 5 percent holes") {
    GaussianSet base = fixtures::sphere_shell(3000, 0.03);
    std::vector<GaussianDisk> disks(base.disks().begin(), base.disks().end());
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& d : disks) {
      d.color = 0.5 * (Vec3::Ones() + d.center);
      d.opacity = 0.5 + 0.4 * u(rng);
      d.grown = u(rng) >= 0.05;
    }
    GaussianSet set(disks);
    const GaussianSet before = set;
    const double spacing = estimate_spacing(fixtures::fibonacci_sphere(3000)).median;
    const auto r = spatial_inpaint(set, 3 * spacing);
    CHECK(set.grown_count() == set.size());
    CHECK(r.rounds <= 3);
    CHECK(r.still_ungrown.empty());
    for (const auto& fill : r.fills) {
      // Convex hull membership, checked per channel (box hull is implied by
      // the convex hull, and IDW weights are positive).
      Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
      for (auto j : fill.contributors) {
        lo = lo.cwiseMin(set[j].color);
        hi = hi.cwiseMax(set[j].color);
      }
      CHECK((set[fill.disk].color.array() >= lo.array() - 1e-12).all());
      CHECK((set[fill.disk].color.array() <= hi.array() + 1e-12).all());
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (before[i].grown) {
        CHECK(set[i].color == before[i].color);
        CHECK(set[i].opacity == before[i].opacity);
      }
    }
  }
}

TEST_CASE("splat PLY export conventions and round trip") {
  SUBCASE("gray and half opacity map to zero") {
    std::vector<GaussianDisk> d(1);
    d[0].color = Vec3::Constant(0.5);
    d[0].opacity = 0.5;
    const std::string path = fixtures::scratch_file("one.ply");
    export_splat_ply(GaussianSet(d), path);
    const auto f = refply::read(path);
    CHECK(f.count == 1);
    CHECK(f.fields.at("f_dc_0")[0] == 0.0f);
    CHECK(f.fields.at("f_dc_2")[0] == 0.0f);
    CHECK(f.fields.at("opacity")[0] == 0.0f);
    CHECK(f.fields.at("scale_2")[0] == static_cast<float>(std::log(1e-5)));
    CHECK(f.order.size() == 17);
  }
  SUBCASE("empty set is rejected") {
    CHECK_THROWS_AS(export_splat_ply(GaussianSet(), fixtures::scratch_file("e.ply")), Error);
  }
  SUBCASE("reimport within 1e-6") {
    const GaussianSet set = fixtures::random_oriented_scene(400, 5, 0.05, 0.95, 0.002, 0.3);
    const std::string path = fixtures::scratch_file("rt.ply");
    export_splat_ply(set, path);
    const GaussianSet back = import_splat_ply(path);
    REQUIRE(back.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK((back[i].center - set[i].center).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((back[i].color - set[i].color).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(back[i].opacity - set[i].opacity) < 1e-6);
      CHECK((back[i].scale - set[i].scale).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(std::abs(back[i].rotation.dot(set[i].rotation)) - 1.0) < 1e-6);
      CHECK((back[i].normal() - set[i].normal()).norm() < 1e-6);
    }
  }
}
