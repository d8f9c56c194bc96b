// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <cmath>
#include <numbers>

namespace ggrow::fixtures {

std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius) {
  std::vector<Vec3> pts(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * static_cast<double>(i);
    pts[i] = radius * Vec3(r * std::cos(phi), r * std::sin(phi), z);
  }
  return pts;
}

std::vector<Vec3> torus(std::size_t n, double major, double minor) {
  // R2 sequence (plastic-number Kronecker) on (u, v); v goes through the
  // inverse CDF of its marginal (R v + r sin v) / (2 pi R) so the samples are
  // area-uniform.
  const double g = 1.32471795724474602596;
  const double a1 = 1.0 / g, a2 = 1.0 / (g * g);
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::uint64_t i = 1; i <= n; ++i) {
    const double s = std::fmod(0.5 + a1 * static_cast<double>(i), 1.0);
    const double t = std::fmod(0.5 + a2 * static_cast<double>(i), 1.0);
    const double target = two_pi * major * t;
    double v = two_pi * t;
    for (int it = 0; it < 50; ++it) {
      const double step = (major * v + minor * std::sin(v) - target) / (major + minor * std::cos(v));
      v -= step;
      if (std::abs(step) < 1e-15) break;
    }
    const double u = two_pi * s;
    const double ring = major + minor * std::cos(v);
    pts.emplace_back(ring * std::cos(u), ring * std::sin(u), minor * std::sin(v));
  }
  return pts;
}

std::vector<Vec3> planar_grid(int nx, int ny, double step) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      pts.emplace_back((i - 0.5 * (nx - 1)) * step, (j - 0.5 * (ny - 1)) * step, 0.0);
    }
  }
  return pts;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(nd(rng), nd(rng), nd(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

namespace {

GaussianSet random_scene(std::size_t n, std::uint64_t seed, double omin, double omax,
                         double smin, double smax, bool oriented) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), o(omin, omax), s(smin, smax),
      c(0.0, 1.0);
  std::vector<GaussianDisk> disks(n);
  for (std::size_t i = 0; i < n; ++i) {
    GaussianDisk& d = disks[i];
    d.center = Vec3(0.6 * u(rng), 0.6 * u(rng), 0.6 * u(rng));
    const Vec3 normal = oriented ? random_unit(rng) : Vec3::UnitX();
    d.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), normal).normalized();
    d.scale = Vec2(s(rng), s(rng));
    d.opacity = o(rng);
    d.color = Vec3(c(rng), c(rng), c(rng));
    d.source_index = static_cast<std::uint32_t>(i);
  }
  return GaussianSet(std::move(disks));
}

}  // namespace

GaussianSet random_disk_scene(std::size_t n, std::uint64_t seed, double opacity_min,
                              double opacity_max, double scale_min, double scale_max) {
  return random_scene(n, seed, opacity_min, opacity_max, scale_min, scale_max, false);
}

GaussianSet random_oriented_scene(std::size_t n, std::uint64_t seed, double opacity_min,
                                  double opacity_max, double scale_min, double scale_max) {
  return random_scene(n, seed, opacity_min, opacity_max, scale_min, scale_max, true);
}

GaussianSet sphere_shell(std::size_t n, double scale, double opacity) {
  const auto pts = fibonacci_sphere(n);
  std::vector<GaussianDisk> disks(n);
  for (std::size_t i = 0; i < n; ++i) {
    disks[i].center = pts[i];
    disks[i].rotation = Quat::FromTwoVectors(Vec3::UnitZ(), pts[i]).normalized();
    disks[i].scale = Vec2::Constant(scale);
    disks[i].opacity = opacity;
    disks[i].source_index = static_cast<std::uint32_t>(i);
  }
  return GaussianSet(std::move(disks));
}

}  // namespace ggrow::fixtures
