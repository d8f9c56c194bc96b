// SPDX-License-Identifier: Apache-2.0
//
// Serial references against the OpenMP kernels. The thread argument 0 runs
// the serial path; other values run the parallel path with that many threads.

#include "fixtures.hpp"

#include "ggrow/pose_opt.hpp"

#include <benchmark/benchmark.h>

using namespace ggrow;

namespace {

Intrinsics square(int n) {
  Intrinsics in;
  in.width = in.height = n;
  return in;
}

const GaussianSet& big_scene() {
  static const GaussianSet set =
      fixtures::random_oriented_scene(100000, 4242, 0.3, 1.0, 0.004, 0.02);
  return set;
}

void BM_VisibleSet(benchmark::State& state) {
  const int threads = static_cast<int>(state.range(0));
  const CameraPose pose = CameraPose::from_spherical(0.4, 0.3, 2.5, square(512));
  for (auto _ : state) {
    IndexSet v = threads == 0 ? visible_set_serial(big_scene(), pose)
                              : visible_set(big_scene(), pose, {}, threads);
    benchmark::DoNotOptimize(v.data());
  }
}
BENCHMARK(BM_VisibleSet)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_Render(benchmark::State& state) {
  const int threads = std::max(1, static_cast<int>(state.range(0)));
  const CameraPose pose = CameraPose::from_spherical(0.4, 0.3, 2.5, square(512));
  for (auto _ : state) {
    RenderOutput r = render(big_scene(), pose, Vec3::Ones(), {}, false, threads);
    benchmark::DoNotOptimize(r.color.data.data());
  }
}
BENCHMARK(BM_Render)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_GeometryMaps(benchmark::State& state) {
  static const UnsignedField field(make_point_cloud(fixtures::torus(8000)));
  const int threads = std::max(1, static_cast<int>(state.range(0)));
  const CameraPose pose = CameraPose::from_spherical(0.4, 0.3, 2.5, square(256));
  for (auto _ : state) {
    GeometryMaps m = render_geometry_maps(field, pose, threads);
    benchmark::DoNotOptimize(m.depth.data.data());
  }
}
BENCHMARK(BM_GeometryMaps)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_OcclusionLoss(benchmark::State& state) {
  static const GaussianSet set = [] {
    const GaussianSet shell = fixtures::sphere_shell(8000, 0.03);
    std::vector<GaussianDisk> d(shell.disks().begin(), shell.disks().end());
    for (GaussianDisk& g : d) g.grown = g.center.x() > 0.0;
    return GaussianSet(std::move(d));
  }();
  PoseOptConfig cfg;
  cfg.threads = std::max(1, static_cast<int>(state.range(0)));
  cfg.exact_pairs = state.range(1) != 0;
  const CameraPose pose = CameraPose::from_spherical(2.0, 0.2, 2.5, Intrinsics{});
  for (auto _ : state) benchmark::DoNotOptimize(occlusion_loss(set, pose, cfg));
}
BENCHMARK(BM_OcclusionLoss)
    ->Args({1, 0})
    ->Args({8, 0})
    ->Args({1, 1})
    ->Args({8, 1})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
