// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include "ggrow/pose_opt.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

using namespace ggrow;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

GaussianDisk disk(const Vec3& c, const Vec3& n, double s, bool grown = false) {
  GaussianDisk d;
  d.center = c;
  d.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), n.normalized());
  d.scale = Vec2::Constant(s);
  d.opacity = 0.9;
  d.grown = grown;
  return d;
}

OverlapRegion region_of(IndexSet members) {
  OverlapRegion r;
  r.members = std::move(members);
  return r;
}

IndexSet cap_members(const GaussianSet& shell, const Vec3& u, double half_angle) {
  IndexSet out;
  for (std::uint32_t i = 0; i < shell.size(); ++i) {
    if (shell[i].center.normalized().dot(u) >= std::cos(half_angle)) out.push_back(i);
  }
  return out;
}

GaussianSet half_grown_shell(std::size_t n) {
  const GaussianSet shell = fixtures::sphere_shell(n, 0.06);
  std::vector<GaussianDisk> disks(shell.disks().begin(), shell.disks().end());
  for (GaussianDisk& d : disks) d.grown = d.center.x() > 0.0;
  return GaussianSet(std::move(disks));
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

PoseOptConfig small_cfg() {
  PoseOptConfig cfg;
  cfg.intrinsics.width = cfg.intrinsics.height = 256;
  return cfg;
}

}  // namespace

TEST_CASE("align_loss closed forms") {
  const GaussianSet one({disk(Vec3::Zero(), Vec3::UnitX(), 0.05)});
  const OverlapRegion r = region_of({0});
  CHECK(std::abs(align_loss(r, one, Vec3(2.5, 0, 0))) < 1e-9);
  CHECK(std::abs(align_loss(r, one, Vec3(-2.5, 0, 0))) < 1e-9);
  CHECK(std::abs(align_loss(r, one, Vec3(0, 2.5, 0)) - 1.0) < 1e-9);
  CHECK(std::abs(align_loss(r, one, Vec3(0, 0, 2.5)) - 1.0) < 1e-9);

  const AlignEval coincident = align_eval(r, one, Vec3::Zero());
  CHECK(coincident.skipped == 1);
  CHECK(coincident.loss == 0.0);
  CHECK_THROWS_AS(align_loss(region_of({}), one, Vec3(2.5, 0, 0)), Error);
}

TEST_CASE("align_loss gradient matches central differences") {
  std::mt19937_64 rng(11);
  const GaussianSet scene = fixtures::random_oriented_scene(400, 3, 0.5, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick(0, 399);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    IndexSet m;
    for (int k = 0; k < 30; ++k) m.push_back(pick(rng));
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    const OverlapRegion r = region_of(m);
    const Vec3 cam = 2.5 * fixtures::random_unit(rng);
    const Vec3 g = align_eval(r, scene, cam).grad;
    Vec3 fd;
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e[a] = h;
      fd[a] = (align_loss(r, scene, cam + e) - align_loss(r, scene, cam - e)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-6));
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-5);
}

TEST_CASE("multistart seeds and icosphere") {
  CHECK(icosphere(0).size() == 12);
  CHECK(icosphere(1).size() == 42);
  CHECK(icosphere(5).size() == 10242);
  const auto seeds = multistart_seeds(12);
  REQUIRE(seeds.size() == 12);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(std::abs(seeds[i].norm() - 1.0) < 1e-12);
    for (std::size_t j = i + 1; j < seeds.size(); ++j) {
      CHECK(angle_between(seeds[i], seeds[j]) > 63.0 * kDeg);
    }
  }
  const auto eight = multistart_seeds(8);
  for (std::size_t i = 0; i < 8; ++i) CHECK((eight[i] - seeds[i]).norm() == 0.0);
  // Farthest-point order: the second seed is antipodal to the first.
  CHECK((seeds[0] + seeds[1]).norm() < 1e-12);
  CHECK(multistart_seeds(20).size() == 20);
  CHECK_THROWS_AS(multistart_seeds(0), Error);
}

TEST_CASE("optimize_overlap_pose on a spherical cap matches the dense oracle") {
  const GaussianSet shell = fixtures::sphere_shell(3000, 0.045);
  const Vec3 u = Vec3(0.3, -0.5, 0.7).normalized();
  const OverlapRegion r = region_of(cap_members(shell, u, 20.0 * kDeg));
  REQUIRE(r.members.size() > 50);

  PoseOptConfig cfg = small_cfg();
  auto dense_argmin = [&](const Vec3& hemi, double& best_loss) {
    Vec3 best = Vec3::Zero();
    best_loss = std::numeric_limits<double>::infinity();
    for (const Vec3& d : icosphere(5)) {
      if (d.dot(hemi) < 0.0) continue;
      const double l = align_loss(r, shell, cfg.sphere_radius * d);
      if (l < best_loss) {
        best_loss = l;
        best = d;
      }
    }
    return best;
  };

  // Unconstrained, the far side wins: rays through the shell to the cap
  // are closer to radial from 3.5 units away than from 1.5.
  double dense_loss = 0.0;
  const Vec3 dense_best = dense_argmin(Vec3::Zero(), dense_loss);
  CHECK(dense_best.dot(u) < -0.99);
  const PoseOptResult free_res = optimize_overlap_pose(r, shell, cfg);
  const Vec3 free_dir = free_res.pose.position().normalized();
  MESSAGE("free optimizer vs dense argmin: " << angle_between(free_dir, dense_best) / kDeg);
  CHECK(angle_between(free_dir, dense_best) < 3.0 * kDeg);
  CHECK(free_res.loss <= dense_loss + 1e-9);

  cfg.hemisphere = u;
  double near_loss = 0.0;
  const Vec3 near_best = dense_argmin(u, near_loss);
  const PoseOptResult res = optimize_overlap_pose(r, shell, cfg);
  const Vec3 dir = res.pose.position().normalized();
  MESSAGE("hemisphere optimizer vs dense argmin: " << angle_between(dir, near_best) / kDeg);
  CHECK(angle_between(dir, near_best) < 3.0 * kDeg);
  CHECK(angle_between(dir, u) < 3.0 * kDeg);
  CHECK(res.loss <= near_loss + 1e-9);
  CHECK(std::abs(res.pose.position().norm() - cfg.sphere_radius) < 1e-6);

  SUBCASE("iterates stay on the sphere and accepted losses never increase") {
    for (std::size_t k = 0; k < res.trace.size(); ++k) {
      CHECK(std::abs(res.trace[k].direction.norm() - 1.0) < 1e-6);
      if (k > 0 && res.trace[k].restart == res.trace[k - 1].restart) {
        CHECK(res.trace[k].loss <= res.trace[k - 1].loss);
      }
    }
    const std::string csv = trace_csv(res.trace);
    CHECK(csv.rfind("restart,iter,x,y,z,loss,step\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) ==
          res.trace.size() + 1);
  }
}

TEST_CASE("optimize_overlap_pose on a planar patch goes to a pole") {
  std::vector<GaussianDisk> patch;
  for (const Vec3& p : fixtures::planar_grid(3, 3, 1e-3)) patch.push_back(disk(p, Vec3::UnitZ(), 0.01));
  const GaussianSet set(std::move(patch));
  const OverlapRegion r = region_of({0, 1, 2, 3, 4, 5, 6, 7, 8});
  const PoseOptResult res = optimize_overlap_pose(r, set, small_cfg());
  CHECK(std::abs(res.pose.position().normalized().z()) > 0.999);
  CHECK(res.loss < 1e-4);
}

TEST_CASE("multistart dominance on two antipodal caps") {
  const GaussianSet shell = fixtures::sphere_shell(3000, 0.045);
  const Vec3 u = Vec3(1, 1, 0.2).normalized();
  IndexSet m = cap_members(shell, u, 20.0 * kDeg);
  const IndexSet far_cap = cap_members(shell, -u, 15.0 * kDeg);
  m.insert(m.end(), far_cap.begin(), far_cap.end());
  std::sort(m.begin(), m.end());
  const PoseOptResult res = optimize_overlap_pose(region_of(m), shell, small_cfg());
  REQUIRE(res.seed_losses.size() == 8);
  CHECK(res.loss <= *std::min_element(res.restart_losses.begin(), res.restart_losses.end()));
  CHECK(res.loss <= *std::min_element(res.seed_losses.begin(), res.seed_losses.end()));
  CHECK_FALSE(res.all_diverged);
}

TEST_CASE("occlusion_loss closed forms and preconditions") {
  PoseOptConfig cfg = small_cfg();
  const CameraPose cam = CameraPose::from_spherical(0, 0, 2.5, cfg.intrinsics);
  // Un-grown one unit behind the grown disk on the optical axis.
  const GaussianSet pair({disk(Vec3(-0.5, 0, 0), Vec3::UnitX(), 0.01, false),
                          disk(Vec3(0.5, 0, 0), Vec3::UnitX(), 0.01, true)});
  CHECK(std::abs(occlusion_loss(pair, cam, cfg) - 1.0) < 1e-9);
  cfg.exact_pairs = true;
  CHECK(std::abs(occlusion_loss(pair, cam, cfg) - 1.0) < 1e-9);

  // Swapped depth: the un-grown disk is in front.
  const GaussianSet front({disk(Vec3(0.5, 0, 0), Vec3::UnitX(), 0.01, false),
                           disk(Vec3(-0.5, 0, 0), Vec3::UnitX(), 0.01, true)});
  CHECK(occlusion_loss(front, cam, cfg) < 1e-20);

  const GaussianSet grown_only({disk(Vec3::Zero(), Vec3::UnitX(), 0.01, true)});
  CHECK_THROWS_AS(occlusion_loss(grown_only, cam, cfg), Error);
  const GaussianSet ungrown_only({disk(Vec3::Zero(), Vec3::UnitX(), 0.01, false)});
  CHECK_THROWS_AS(occlusion_loss(ungrown_only, cam, cfg), Error);
  CHECK_THROWS_AS(optimize_unseen_pose(grown_only, cfg), Error);

  PoseOptConfig bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = PoseOptConfig{};
  bad.restarts = 0;
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("pruned occlusion_loss equals the exhaustive pair sum") {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GaussianSet scene = fixtures::random_oriented_scene(150, 40 + seed, 0.3, 1.0);
    std::vector<GaussianDisk> disks(scene.disks().begin(), scene.disks().end());
    std::bernoulli_distribution flip(0.5);
    for (GaussianDisk& d : disks) d.grown = flip(rng);
    disks[0].grown = true;
    disks[1].grown = false;
    const GaussianSet set(std::move(disks));
    const CameraPose cam = CameraPose::look_at_origin(2.5 * fixtures::random_unit(rng),
                                                      Intrinsics{});
    for (double tau : {50.0, 0.5, 0.01}) {
      for (bool all : {false, true}) {
        PoseOptConfig cfg;
        cfg.tau = tau;
        cfg.tau_scales_all = all;
        const double pruned = occlusion_loss(set, cam, cfg);
        cfg.exact_pairs = true;
        const double exact = occlusion_loss(set, cam, cfg);
        CHECK(std::abs(pruned - exact) < 1e-9);
      }
    }
  }
}

TEST_CASE("occlusion_loss invariances") {
  std::mt19937_64 rng(9);
  const GaussianSet scene = fixtures::random_oriented_scene(200, 77, 0.3, 1.0);
  std::vector<GaussianDisk> disks(scene.disks().begin(), scene.disks().end());
  for (std::size_t i = 0; i < disks.size(); ++i) disks[i].grown = i % 3 == 0;
  const PoseOptConfig cfg = small_cfg();
  const CameraPose cam = CameraPose::from_spherical(0.7, 0.3, 2.5, cfg.intrinsics);
  const GaussianSet base(disks);
  const double l0 = occlusion_loss(base, cam, cfg);
  CHECK(l0 > 0.0);

  SUBCASE("permutation") {
    std::vector<GaussianDisk> perm = disks;
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(std::abs(occlusion_loss(GaussianSet(perm), cam, cfg) - l0) < 1e-9);
  }
  SUBCASE("rotation of scene and camera") {
    const Quat q = Quat(Eigen::AngleAxisd(0.9, Vec3(0.2, -0.4, 0.8).normalized()));
    std::vector<GaussianDisk> rot = disks;
    for (GaussianDisk& d : rot) {
      d.center = q * d.center;
      d.rotation = q * d.rotation;
    }
    const GaussianSet rset(rot);
    const CameraPose rcam = CameraPose::look_at_origin(q * cam.position(), cfg.intrinsics);
    CHECK(std::abs(occlusion_loss(rset, rcam, cfg) - l0) < 1e-9 * std::max(1.0, l0));

    const OverlapRegion r = region_of({1, 2, 3, 10, 20, 30, 40});
    CHECK(std::abs(align_loss(r, base, cam.position()) - align_loss(r, rset, rcam.position())) <
          1e-9);
  }
  SUBCASE("thread count") {
    PoseOptConfig one = cfg, many = cfg;
    one.threads = 1;
    many.threads = 4;
    CHECK(occlusion_loss(base, cam, one) == occlusion_loss(base, cam, many));
  }
}

TEST_CASE("occlusion_loss prefers the pole that sees un-grown disks first") {
  std::vector<GaussianDisk> disks;
  for (const Vec3& p : fixtures::planar_grid(6, 6, 0.1)) {
    disks.push_back(disk(p + Vec3(0, 0, 0.4), Vec3::UnitZ(), 0.04, false));
    disks.push_back(disk(p - Vec3(0, 0, 0.4), Vec3::UnitZ(), 0.04, true));
  }
  const GaussianSet set(std::move(disks));
  const PoseOptConfig cfg = small_cfg();
  const double top = occlusion_loss(set, CameraPose::look_at_origin(Vec3(0, 0, 2.5), cfg.intrinsics), cfg);
  const double bottom =
      occlusion_loss(set, CameraPose::look_at_origin(Vec3(0, 0, -2.5), cfg.intrinsics), cfg);
  CHECK(top < bottom);
}

TEST_CASE("optimize_unseen_pose on a half-grown shell faces the un-grown side") {
  const GaussianSet set = half_grown_shell(1200);
  const PoseOptConfig cfg = small_cfg();
  const auto t0 = std::chrono::steady_clock::now();
  const PoseOptResult res = optimize_unseen_pose(set, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Vec3 dir = res.pose.position().normalized();
  MESSAGE("unseen pose " << dir.transpose() << " loss " << res.loss << " in " << secs << " s");
  CHECK(dir.dot(Vec3(-1, 0, 0)) > 0.9);
  CHECK(std::abs(res.pose.position().norm() - cfg.sphere_radius) < 1e-6);

  SUBCASE("loss within 2 percent of a dense search") {
    double dense = std::numeric_limits<double>::infinity();
    for (const Vec3& d : icosphere(3)) {
      dense = std::min(dense, occlusion_loss(set, CameraPose::look_at_origin(
                                                      cfg.sphere_radius * d, cfg.intrinsics),
                                             cfg));
    }
    MESSAGE("optimizer " << res.loss << " dense " << dense);
    CHECK(res.loss <= dense * 1.02 + 1e-9);
  }
}
