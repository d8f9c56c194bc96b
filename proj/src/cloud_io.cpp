// SPDX-License-Identifier: Apache-2.0

#include "ggrow/cloud_io.hpp"

#include "ggrow/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ggrow {

PointCloud make_point_cloud(std::vector<Vec3> points,
                            std::vector<Vec3> input_normals) {
  if (points.size() < 4) {
    throw Error(ErrorCode::TooFewPoints,
                "too few points: " + std::to_string(points.size()) + " < 4");
  }
  for (const Vec3& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite coordinate");
  }
  if (!input_normals.empty() && input_normals.size() != points.size()) {
    throw Error(ErrorCode::InvalidArgument, "normal count differs from point count");
  }
  PointCloud c;
  c.points = std::move(points);
  c.input_normals = std::move(input_normals);
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : c.points) sum += p;
  c.bounding_center = sum / static_cast<double>(c.points.size());
  double r2 = 0.0;
  for (const Vec3& p : c.points) {
    r2 = std::max(r2, (p - c.bounding_center).squaredNorm());
  }
  c.bounding_radius = std::sqrt(r2);
  if (!(c.bounding_radius > 0.0)) {
    throw Error(ErrorCode::Degenerate, "all points coincide");
  }
  return c;
}

PointCloud load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");

  const ply::Header header = ply::read_header(in);
  const ply::Element* vertex = header.find("vertex");
  if (!vertex) throw Error(ErrorCode::MalformedHeader, "PLY has no vertex element");
  for (const char* axis : {"x", "y", "z"}) {
    const int i = vertex->find(axis);
    if (i < 0) {
      throw Error(ErrorCode::MalformedHeader, std::string("missing property ") + axis);
    }
    const ply::Property& p = vertex->properties[static_cast<std::size_t>(i)];
    if (p.is_list || !ply::is_float(p.type)) {
      throw Error(ErrorCode::BadPropertyType,
                  std::string("coordinate '") + axis + "' is not float/double");
    }
  }
  if (vertex->count < 4) {
    throw Error(ErrorCode::TooFewPoints,
                "too few points: " + std::to_string(vertex->count) + " < 4");
  }

  const ply::Table t = ply::read_element(in, header, "vertex");
  const int cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
  const int nx = t.column("nx"), ny = t.column("ny"), nz = t.column("nz");
  const bool normals = nx >= 0 && ny >= 0 && nz >= 0;

  std::vector<Vec3> pts(t.rows), nrm;
  if (normals) nrm.resize(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) {
    pts[r] = Vec3(t.at(r, cx), t.at(r, cy), t.at(r, cz));
    if (normals) nrm[r] = Vec3(t.at(r, nx), t.at(r, ny), t.at(r, nz));
  }
  return make_point_cloud(std::move(pts), std::move(nrm));
}

void write_ply(const PointCloud& cloud, const std::string& path,
               ply::Format format) {
  const bool normals = !cloud.input_normals.empty();
  std::vector<ply::Property> cols;
  for (const char* n : {"x", "y", "z"}) cols.push_back({n, ply::Type::Float64});
  if (normals) {
    for (const char* n : {"nx", "ny", "nz"}) cols.push_back({n, ply::Type::Float64});
  }
  std::vector<double> values;
  values.reserve(cloud.size() * cols.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) values.push_back(cloud.points[i][a]);
    if (normals) {
      for (int a = 0; a < 3; ++a) values.push_back(cloud.input_normals[i][a]);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  ply::write_single_element(out, format, "vertex", cols, cloud.size(), values);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

NormalizedCloud normalize_to_unit(const PointCloud& cloud) {
  if (!(cloud.bounding_radius > 0.0)) {
    throw Error(ErrorCode::Degenerate, "cannot normalize a degenerate cloud");
  }
  const Similarity to_original{cloud.bounding_radius, cloud.bounding_center};
  const Similarity to_unit = to_original.inverse();
  std::vector<Vec3> pts(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) pts[i] = to_unit.apply(cloud.points[i]);
  return {make_point_cloud(std::move(pts), cloud.input_normals), to_original};
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lo + hi);
}

namespace {

double mean_distance(const std::vector<Neighbor>& nb) {
  double s = 0.0;
  for (const Neighbor& n : nb) s += std::sqrt(n.dist2);
  return s / static_cast<double>(nb.size());
}

void clamp_zero_spacing(SpacingResult& r) {
  std::vector<double> positive;
  positive.reserve(r.spacing.size());
  for (double s : r.spacing) {
    if (s > 0.0) positive.push_back(s);
  }
  if (positive.empty()) throw Error(ErrorCode::Degenerate, "all points coincide");
  r.median = median_of(std::move(positive));
  for (double& s : r.spacing) {
    if (!(s > 0.0)) {
      s = r.median;
      ++r.clamped;
    }
  }
}

void check_k(std::size_t n, std::size_t k) {
  if (k == 0 || k >= n) {
    throw Error(ErrorCode::InvalidArgument,
                "spacing needs 0 < k < N (k=" + std::to_string(k) +
                    ", N=" + std::to_string(n) + ")");
  }
}

}  // namespace

SpacingResult estimate_spacing(std::span<const Vec3> points, std::size_t k,
                               int threads) {
  check_k(points.size(), k);
  const KdTree tree(points);
  SpacingResult r;
  r.spacing.resize(points.size());
  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel num_threads(resolve_threads(threads))
  {
    std::vector<Neighbor> nb;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      tree.knn_into(points[i], k, static_cast<std::uint32_t>(i), nb);
      r.spacing[i] = mean_distance(nb);
    }
  }
  clamp_zero_spacing(r);
  return r;
}

SpacingResult estimate_spacing(const PointCloud& cloud, std::size_t k, int threads) {
  return estimate_spacing(std::span<const Vec3>(cloud.points), k, threads);
}

SpacingResult estimate_spacing_brute_force(std::span<const Vec3> points,
                                           std::size_t k) {
  check_k(points.size(), k);
  SpacingResult r;
  r.spacing.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    r.spacing[i] = mean_distance(
        brute_force_knn(points, points[i], k, static_cast<std::uint32_t>(i)));
  }
  clamp_zero_spacing(r);
  return r;
}

}  // namespace ggrow
