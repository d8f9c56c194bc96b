// SPDX-License-Identifier: Apache-2.0
//
// Deterministic geometry fixtures shared by tests, acceptance and bench.

#pragma once

#include "ggrow/gaussians.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace ggrow::fixtures {

/// Near-uniform points on a sphere (golden-angle spiral).
std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius = 1.0);

/// Area-uniform torus around the z axis: a 2-D Kronecker sequence with the
/// tube angle mapped through the inverse of its area-weighted CDF.
std::vector<Vec3> torus(std::size_t n, double major = 1.0, double minor = 0.3);

/// nx * ny grid in the z = 0 plane, centered at the origin.
std::vector<Vec3> planar_grid(int nx, int ny, double step);

/// 2 * half_extent wide screen-facing disks at random depths; all normals
/// point along +x so a camera on +x sees them face-on.
GaussianSet random_disk_scene(std::size_t n, std::uint64_t seed, double opacity_min,
                              double opacity_max, double scale_min = 0.02,
                              double scale_max = 0.12);

/// Random scene with random orientations inside the unit ball.
GaussianSet random_oriented_scene(std::size_t n, std::uint64_t seed, double opacity_min,
                                  double opacity_max, double scale_min = 0.02,
                                  double scale_max = 0.12);

/// One disk per sphere point, radial normals, isotropic scale `scale`.
GaussianSet sphere_shell(std::size_t n, double scale, double opacity = 0.995);

Vec3 random_unit(std::mt19937_64& rng);

}  // namespace ggrow::fixtures
