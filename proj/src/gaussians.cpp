// SPDX-License-Identifier: Apache-2.0

#include "ggrow/gaussians.hpp"

#include "ggrow/kdtree.hpp"
#include "ggrow/ply.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>

namespace ggrow {

namespace {

// Versions come from one process-wide counter so that two distinct sets
// never share a version unless one is an unmodified copy of the other.
std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace

GaussianSet::GaussianSet(std::vector<GaussianDisk> disks)
    : disks_(std::move(disks)), version_(next_version()) {
  for (const auto& d : disks_) grown_count_ += d.grown ? 1 : 0;
}

std::vector<std::uint32_t> GaussianSet::grown_indices() const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < disks_.size(); ++i) {
    if (disks_[i].grown) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

std::vector<std::uint32_t> GaussianSet::ungrown_indices() const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < disks_.size(); ++i) {
    if (!disks_[i].grown) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

void GaussianSet::set_color(std::size_t i, const Vec3& c) {
  disks_[i].color = c;
  version_ = next_version();
}

void GaussianSet::set_opacity(std::size_t i, double o) {
  disks_[i].opacity = o;
  version_ = next_version();
}

void GaussianSet::mark_grown(std::size_t i) {
  if (!disks_[i].grown) {
    disks_[i].grown = true;
    ++grown_count_;
    version_ = next_version();
  }
}

GaussianSet init_from_cloud(const PointCloud& cloud, const UnsignedField& field,
                            std::span<const double> spacing, const DiskInit& init,
                            int threads) {
  if (spacing.size() != cloud.size()) {
    throw Error(ErrorCode::InvalidArgument, "spacing length must equal point count");
  }
  if (!(init.scale_factor > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "scale_factor must be > 0");
  }
  std::vector<GaussianDisk> disks(cloud.size());
  const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static) num_threads(resolve_threads(threads))
  for (std::int64_t i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[i];
    const FieldNormal fn = field.normal_at(p);
    Vec3 normal = fn.normal;
    const double outward = normal.dot(p - cloud.bounding_center);
    if (std::abs(outward) > 0.1 && outward < 0.0) normal = -normal;

    GaussianDisk& d = disks[i];
    d.center = p;
    d.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), normal).normalized();
    d.scale = Vec2::Constant(std::clamp(init.scale_factor * spacing[i], kMinScale, kMaxScale));
    d.opacity = init.opacity;
    d.color = init.color;
    d.grown = false;
    d.source_index = static_cast<std::uint32_t>(i);
    d.normal_fallback = fn.fallback;
  }
  return GaussianSet(std::move(disks));
}

SpatialInpaintReport spatial_inpaint(GaussianSet& set, double radius, int max_rounds) {
  if (set.grown_count() == 0) {
    throw Error(ErrorCode::NothingToPropagate, "nothing to propagate: no grown disks");
  }
  SpatialInpaintReport report;
  std::vector<Vec3> centers(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) centers[i] = set[i].center;
  const KdTree tree(centers);

  struct Update {
    std::uint32_t disk;
    Vec3 color;
    double opacity;
  };
  while (report.rounds < max_rounds && set.grown_count() < set.size()) {
    std::vector<Update> updates;
    for (std::uint32_t i : set.ungrown_indices()) {
      Vec3 c = Vec3::Zero();
      double o = 0.0, wsum = 0.0;
      std::vector<std::uint32_t> contributors;
      for (std::uint32_t j : tree.radius(centers[i], radius)) {
        if (j == i || !set[j].grown) continue;
        const double w = 1.0 / std::max((centers[j] - centers[i]).norm(), 1e-12);
        c += w * set[j].color;
        o += w * set[j].opacity;
        wsum += w;
        contributors.push_back(j);
      }
      if (contributors.empty()) continue;
      updates.push_back({i, c / wsum, o / wsum});
      report.fills.push_back({i, report.rounds + 1, std::move(contributors)});
    }
    if (updates.empty()) break;
    ++report.rounds;
    for (const Update& u : updates) {
      set.set_color(u.disk, u.color);
      set.set_opacity(u.disk, u.opacity);
      set.mark_grown(u.disk);
    }
  }
  report.still_ungrown = set.ungrown_indices();
  return report;
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace {

const std::vector<const char*> kSplatColumns = {
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
    "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"};

}  // namespace

void export_splat_ply(const GaussianSet& set, const std::string& path) {
  if (set.empty()) throw Error(ErrorCode::InvalidArgument, "cannot export an empty set");
  std::vector<ply::Property> cols;
  for (const char* n : kSplatColumns) cols.push_back({n, ply::Type::Float32});
  std::vector<double> v;
  v.reserve(set.size() * cols.size());
  for (const GaussianDisk& d : set.disks()) {
    const Vec3 n = d.normal();
    const double o = std::clamp(d.opacity, 1e-7, 1.0 - 1e-7);
    v.insert(v.end(), {d.center.x(), d.center.y(), d.center.z(), n.x(), n.y(), n.z()});
    for (int c = 0; c < 3; ++c) v.push_back((d.color[c] - 0.5) / kShC0);
    v.push_back(logit(o));
    v.insert(v.end(), {std::log(d.scale.x()), std::log(d.scale.y()), std::log(kMinScale)});
    v.insert(v.end(), {d.rotation.w(), d.rotation.x(), d.rotation.y(), d.rotation.z()});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  ply::write_single_element(out, ply::Format::BinaryLittleEndian, "vertex", cols,
                            set.size(), v);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

GaussianSet import_splat_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  const ply::Header h = ply::read_header(in);
  const ply::Table t = ply::read_element(in, h, "vertex");
  std::vector<int> col;
  for (const char* n : kSplatColumns) {
    const int c = t.column(n);
    if (c < 0) throw Error(ErrorCode::MalformedHeader, std::string("splat PLY lacks ") + n);
    col.push_back(c);
  }
  std::vector<GaussianDisk> disks(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) {
    auto f = [&](int k) { return t.at(r, col[static_cast<std::size_t>(k)]); };
    GaussianDisk& d = disks[r];
    d.center = Vec3(f(0), f(1), f(2));
    d.color = Vec3(0.5 + kShC0 * f(6), 0.5 + kShC0 * f(7), 0.5 + kShC0 * f(8));
    d.opacity = sigmoid(f(9));
    d.scale = Vec2(std::exp(f(10)), std::exp(f(11)));
    d.rotation = Quat(f(13), f(14), f(15), f(16)).normalized();
    d.source_index = static_cast<std::uint32_t>(r);
  }
  return GaussianSet(std::move(disks));
}

}  // namespace ggrow
