// SPDX-License-Identifier: Apache-2.0

#include "ggrow/pose_opt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace ggrow {

namespace {

// Sigmoid arguments below this contribute < 1e-26 per pair and are skipped
// by the pruned path.
constexpr double kSkipArg = -60.0;
// Fixed chunk for ordered partial sums, so the thread count never changes
// the result.
constexpr std::size_t kChunk = 64;

double logistic(double x) {
  // Above 40 the value rounds to exactly 1.0 in double.
  if (x > 40.0) return 1.0;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Proj {
  Vec2 q;
  double z;
  double rho;
};

struct Split {
  std::vector<Proj> ungrown;
  std::vector<Proj> grown;
};

Split project_split(const GaussianSet& set, const CameraPose& pose, const SplatConfig& cfg) {
  if (set.grown_count() == 0 || set.grown_count() == set.size()) {
    throw Error(ErrorCode::Precondition, "occlusion loss needs both grown and un-grown disks");
  }
  Split s;
  for (const GaussianDisk& d : set.disks()) {
    const auto p = project(d, pose, cfg);
    if (!p) continue;
    (d.grown ? s.grown : s.ungrown).push_back({p->q, p->z, p->rho});
  }
  return s;
}

double first_arg(const Proj& a, const Proj& b, double tau, bool scale_all) {
  const double r = a.rho + b.rho;
  const double dq2 = (a.q - b.q).squaredNorm();
  return scale_all ? tau * (r * r - dq2) : tau * r * r - dq2;
}

double pair_term(const Proj& u, const Proj& g, double tau, bool scale_all) {
  return logistic(first_arg(u, g, tau, scale_all)) * logistic(tau * (u.z - g.z));
}

double sum_chunks(const std::vector<double>& partial) {
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

double exact_sum(const Split& s, const PoseOptConfig& cfg, int nt) {
  const std::size_t n = s.ungrown.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for num_threads(nt) schedule(dynamic, 1)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    double acc = 0.0;
    const std::size_t i0 = static_cast<std::size_t>(c) * kChunk;
    const std::size_t i1 = std::min(n, i0 + kChunk);
    for (std::size_t i = i0; i < i1; ++i) {
      for (const Proj& g : s.grown) acc += pair_term(s.ungrown[i], g, cfg.tau, cfg.tau_scales_all);
    }
    partial[static_cast<std::size_t>(c)] = acc;
  }
  return sum_chunks(partial);
}

// Buckets grown projections on a square screen grid and visits only cells
// inside the radius where the first sigmoid argument exceeds kSkipArg.
double pruned_sum(const Split& s, const PoseOptConfig& cfg, int nt) {
  if (s.ungrown.empty() || s.grown.empty()) return 0.0;
  double rho_max = 0.0;
  double xmin = std::numeric_limits<double>::max(), ymin = xmin;
  double xmax = std::numeric_limits<double>::lowest(), ymax = xmax;
  for (const Proj& g : s.grown) {
    rho_max = std::max(rho_max, g.rho);
    xmin = std::min(xmin, g.q.x());
    xmax = std::max(xmax, g.q.x());
    ymin = std::min(ymin, g.q.y());
    ymax = std::max(ymax, g.q.y());
  }
  const double a = cfg.tau_scales_all ? 1.0 : cfg.tau;
  const double b = cfg.tau_scales_all ? -kSkipArg / cfg.tau : -kSkipArg;
  // Cutoff radius for a typical pair sets the cell size.
  const double cell = std::max(1.0, std::sqrt(a * 4.0 * rho_max * rho_max + b));
  const int nx = std::max(1, std::min(512, static_cast<int>((xmax - xmin) / cell) + 1));
  const int ny = std::max(1, std::min(512, static_cast<int>((ymax - ymin) / cell) + 1));
  const double sx = nx / std::max(xmax - xmin, 1e-9), sy = ny / std::max(ymax - ymin, 1e-9);
  std::vector<std::uint32_t> offsets(static_cast<std::size_t>(nx) * ny + 1, 0);
  std::vector<int> cell_of(s.grown.size());
  for (std::size_t j = 0; j < s.grown.size(); ++j) {
    const int cx = std::clamp(static_cast<int>((s.grown[j].q.x() - xmin) * sx), 0, nx - 1);
    const int cy = std::clamp(static_cast<int>((s.grown[j].q.y() - ymin) * sy), 0, ny - 1);
    cell_of[j] = cy * nx + cx;
    ++offsets[static_cast<std::size_t>(cell_of[j]) + 1];
  }
  for (std::size_t c = 1; c < offsets.size(); ++c) offsets[c] += offsets[c - 1];
  std::vector<std::uint32_t> members(s.grown.size());
  {
    std::vector<std::uint32_t> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t j = 0; j < s.grown.size(); ++j) members[fill[cell_of[j]]++] = j;
  }
  // Pairs with tau (z_u - z_g) below kSkipArg are negligible as well.
  const double dz_skip = -kSkipArg / cfg.tau;

  const std::size_t n = s.ungrown.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for num_threads(nt) schedule(dynamic, 1)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    double acc = 0.0;
    const std::size_t i0 = static_cast<std::size_t>(c) * kChunk;
    const std::size_t i1 = std::min(n, i0 + kChunk);
    for (std::size_t i = i0; i < i1; ++i) {
      const Proj& u = s.ungrown[i];
      const double r = u.rho + rho_max;
      const double reach = std::sqrt(a * r * r + b);
      const int x0 = std::clamp(static_cast<int>(std::floor((u.q.x() - reach - xmin) * sx)), 0, nx - 1);
      const int x1 = std::clamp(static_cast<int>(std::floor((u.q.x() + reach - xmin) * sx)), 0, nx - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor((u.q.y() - reach - ymin) * sy)), 0, ny - 1);
      const int y1 = std::clamp(static_cast<int>(std::floor((u.q.y() + reach - ymin) * sy)), 0, ny - 1);
      if (u.q.x() + reach < xmin || u.q.x() - reach > xmax || u.q.y() + reach < ymin ||
          u.q.y() - reach > ymax) {
        continue;
      }
      for (int cy = y0; cy <= y1; ++cy) {
        for (int cx = x0; cx <= x1; ++cx) {
          const std::size_t cell_id = static_cast<std::size_t>(cy) * nx + cx;
          for (std::uint32_t k = offsets[cell_id]; k < offsets[cell_id + 1]; ++k) {
            const Proj& g = s.grown[members[k]];
            if (u.z - g.z < -dz_skip) continue;
            if (first_arg(u, g, cfg.tau, cfg.tau_scales_all) < kSkipArg) continue;
            acc += pair_term(u, g, cfg.tau, cfg.tau_scales_all);
          }
        }
      }
    }
    partial[static_cast<std::size_t>(c)] = acc;
  }
  return sum_chunks(partial);
}

void tangent_basis(const Vec3& x, Vec3& e1, Vec3& e2) {
  Vec3 t = Vec3::UnitZ().cross(x);
  if (t.norm() < 1e-6) t = Vec3::UnitX().cross(x);
  e1 = t.normalized();
  e2 = x.cross(e1).normalized();
}

/// Moves unit direction x by `angle` radians along unit tangent t.
Vec3 geodesic(const Vec3& x, const Vec3& t, double angle) {
  return (std::cos(angle) * x + std::sin(angle) * t).normalized();
}

struct Objective {
  // Loss at a unit direction.
  std::function<double(const Vec3&)> value;
  // Tangent gradient per radian at a unit direction, given the loss there.
  std::function<Vec3(const Vec3&, double)> gradient;
};

struct RunResult {
  Vec3 dir;
  double loss;
  bool diverged;
};

RunResult descend(const Objective& obj, const Vec3& seed, const PoseOptConfig& cfg, int restart,
                  std::vector<PoseTraceRow>& trace) {
  Vec3 x = seed.normalized();
  double f = obj.value(x);
  if (!std::isfinite(f)) return {x, f, true};
  double step = cfg.step_size;
  trace.push_back({restart, 0, x, f, step});
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Vec3 g = obj.gradient(x, f);
    const double gn = g.norm();
    if (!std::isfinite(gn)) return {x, f, true};
    if (gn < 1e-14) break;
    const Vec3 t = -g / gn;
    bool accepted = false;
    Vec3 x_new = x;
    double f_new = f;
    for (int b = 0; b <= cfg.max_backtracks; ++b) {
      x_new = geodesic(x, t, step);
      f_new = obj.value(x_new);
      if (std::isfinite(f_new) && f_new < f) {
        accepted = true;
        break;
      }
      if (b < cfg.max_backtracks) step *= 0.5;
    }
    if (!accepted) break;
    const double delta = f - f_new;
    x = x_new;
    f = f_new;
    trace.push_back({restart, it, x, f, step});
    if (delta < cfg.convergence_tol) break;
    step = std::min(cfg.step_size, step * 1.5);
  }
  return {x, f, false};
}

PoseOptResult multistart(Objective obj, const PoseOptConfig& cfg) {
  validate(cfg);
  PoseOptResult res;
  std::vector<Vec3> seeds = multistart_seeds(cfg.restarts);
  if (cfg.hemisphere.norm() > 0.0) {
    const Vec3 h = cfg.hemisphere.normalized();
    for (Vec3& s : seeds) {
      if (s.dot(h) < 0.0) s = (s - 2.0 * s.dot(h) * h).normalized();
    }
    obj.value = [h, inner = std::move(obj.value)](const Vec3& x) {
      return x.dot(h) < 0.0 ? std::numeric_limits<double>::infinity() : inner(x);
    };
  }
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_dir = seeds[0];
  int diverged = 0;
  double best_seed = std::numeric_limits<double>::infinity();
  Vec3 best_seed_dir = seeds[0];
  for (int r = 0; r < cfg.restarts; ++r) {
    const double fs = obj.value(seeds[static_cast<std::size_t>(r)]);
    res.seed_losses.push_back(fs);
    if (std::isfinite(fs) && fs < best_seed) {
      best_seed = fs;
      best_seed_dir = seeds[static_cast<std::size_t>(r)];
    }
    const RunResult run = descend(obj, seeds[static_cast<std::size_t>(r)], cfg, r, res.trace);
    res.restart_losses.push_back(run.loss);
    if (run.diverged) {
      ++diverged;
      continue;
    }
    if (run.loss < best) {
      best = run.loss;
      best_dir = run.dir;
      res.best_restart = r;
    }
  }
  if (diverged == cfg.restarts) {
    res.all_diverged = true;
    res.warnings.push_back("all restarts diverged; returning the best seed pose");
    best_dir = best_seed_dir;
    best = best_seed;
  }
  res.loss = best;
  res.pose = CameraPose::look_at_origin(cfg.sphere_radius * best_dir.normalized(), cfg.intrinsics);
  return res;
}

std::vector<Vec3> icosahedron() {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
                         {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
                         {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (Vec3& x : v) x.normalize();
  return v;
}

const int kIcoFaces[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                              {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                              {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                              {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

}  // namespace

void validate(const PoseOptConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw Error(ErrorCode::Config, "pose_opt: tau must be > 0");
  if (cfg.restarts < 1) throw Error(ErrorCode::Config, "pose_opt: restarts must be >= 1");
  if (cfg.max_iters < 0) throw Error(ErrorCode::Config, "pose_opt: max_iters must be >= 0");
  if (!(cfg.step_size > 0.0)) throw Error(ErrorCode::Config, "pose_opt: step_size must be > 0");
  if (!(cfg.fd_step > 0.0)) throw Error(ErrorCode::Config, "pose_opt: fd_step must be > 0");
  if (!(cfg.sphere_radius > 0.0)) {
    throw Error(ErrorCode::Config, "pose_opt: sphere_radius must be > 0");
  }
}

AlignEval align_eval(const OverlapRegion& region, const GaussianSet& set,
                     const Vec3& camera_pos) {
  if (region.members.empty()) throw Error(ErrorCode::Precondition, "align loss: empty region");
  AlignEval e;
  for (std::uint32_t m : region.members) {
    const Vec3 d = set[m].center - camera_pos;
    const double dn = d.norm();
    if (dn < 1e-12) {
      ++e.skipped;
      continue;
    }
    const Vec3 n = set[m].normal().normalized();
    const Vec3 u = d / dn;
    const double c = u.dot(n);
    const double s = c >= 0.0 ? 1.0 : -1.0;
    e.loss += 1.0 - std::abs(c);
    // d/dcam of -|u . n| with u = (center - cam) / |center - cam|.
    e.grad += s * (n - c * u) / dn;
  }
  return e;
}

double align_loss(const OverlapRegion& region, const GaussianSet& set, const Vec3& camera_pos) {
  return align_eval(region, set, camera_pos).loss;
}

double occlusion_loss(const GaussianSet& set, const CameraPose& pose, const PoseOptConfig& cfg) {
  const Split s = project_split(set, pose, cfg.splat);
  const int nt = resolve_threads(cfg.threads);
  return cfg.exact_pairs ? exact_sum(s, cfg, nt) : pruned_sum(s, cfg, nt);
}

PoseOptResult optimize_overlap_pose(const OverlapRegion& region, const GaussianSet& set,
                                    const PoseOptConfig& cfg) {
  if (region.members.empty()) {
    throw Error(ErrorCode::Precondition, "optimize_overlap_pose: empty region");
  }
  const double radius = cfg.sphere_radius;
  Objective obj;
  obj.value = [&](const Vec3& x) { return align_loss(region, set, radius * x); };
  obj.gradient = [&](const Vec3& x, double) {
    const Vec3 g = align_eval(region, set, radius * x).grad;
    return Vec3(radius * (g - g.dot(x) * x));
  };
  return multistart(obj, cfg);
}

PoseOptResult optimize_unseen_pose(const GaussianSet& set, const PoseOptConfig& cfg) {
  if (set.grown_count() == set.size()) {
    throw Error(ErrorCode::Precondition, "optimize_unseen_pose: no un-grown disks");
  }
  if (set.grown_count() == 0) {
    throw Error(ErrorCode::Precondition, "optimize_unseen_pose: no grown disks");
  }
  Objective obj;
  obj.value = [&](const Vec3& x) {
    return occlusion_loss(set, CameraPose::look_at_origin(cfg.sphere_radius * x, cfg.intrinsics),
                          cfg);
  };
  obj.gradient = [&](const Vec3& x, double) {
    Vec3 e1, e2;
    tangent_basis(x, e1, e2);
    const double h = cfg.fd_step;
    const double g1 = (obj.value(geodesic(x, e1, h)) - obj.value(geodesic(x, e1, -h))) / (2 * h);
    const double g2 = (obj.value(geodesic(x, e2, h)) - obj.value(geodesic(x, e2, -h))) / (2 * h);
    return Vec3(g1 * e1 + g2 * e2);
  };
  return multistart(obj, cfg);
}

std::vector<Vec3> icosphere(int level) {
  if (level < 0) throw Error(ErrorCode::InvalidArgument, "icosphere: negative level");
  std::vector<Vec3> v = icosahedron();
  std::vector<std::array<int, 3>> faces;
  for (const auto& f : kIcoFaces) faces.push_back({f[0], f[1], f[2]});
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  return v;
}

std::vector<Vec3> multistart_seeds(int count) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "multistart_seeds: count < 1");
  const std::vector<Vec3> pool = icosphere(count <= 12 ? 0 : 2);
  if (static_cast<std::size_t>(count) > pool.size()) {
    throw Error(ErrorCode::InvalidArgument, "multistart_seeds: too many restarts");
  }
  // Farthest-point order; the 12 icosahedron vertices (the pool prefix)
  // always come first, ties broken by lowest index.
  std::vector<Vec3> out;
  std::vector<double> nearest(pool.size(), std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> used(pool.size(), 0);
  std::size_t pick = 0;
  for (int k = 0; k < count; ++k) {
    used[pick] = 1;
    out.push_back(pool[pick]);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      nearest[i] = std::min(nearest[i], (pool[i] - pool[pick]).norm());
    }
    const std::size_t limit = out.size() < 12 ? 12 : pool.size();
    double far = -1.0;
    for (std::size_t i = 0; i < limit; ++i) {
      if (!used[i] && nearest[i] > far + 1e-12) {
        far = nearest[i];
        pick = i;
      }
    }
  }
  return out;
}

std::string trace_csv(const std::vector<PoseTraceRow>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "restart,iter,x,y,z,loss,step\n";
  for (const PoseTraceRow& r : trace) {
    os << r.restart << ',' << r.iter << ',' << r.direction.x() << ',' << r.direction.y() << ','
       << r.direction.z() << ',' << r.loss << ',' << r.step << '\n';
  }
  return os.str();
}

}  // namespace ggrow
