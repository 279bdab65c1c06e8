#include <benchmark/benchmark.h>

#include "headsynth/deform.hpp"
#include "headsynth/render.hpp"
#include "headsynth/spatial.hpp"
#include "headsynth/triplane.hpp"
#include "headsynth/verify.hpp"

namespace {

using namespace headsynth;

const HeadRig& bench_rig() {
  static const HeadRig rig = procedural_rig(RigSpec{}, 1);
  return rig;
}

PoseCode bench_pose() {
  PoseCode pose;
  pose.neck = Vec3(0.1, 0.3, 0.0);
  return pose;
}

const Mesh& posed_mesh() {
  static const Mesh m = evaluate_mesh(bench_rig(), ShapeCode::zero(bench_rig().shape_dim()),
                                      ExpressionCode::zero(bench_rig().expression_dim()), bench_pose());
  return m;
}

const std::vector<Vec3>& probes() {
  static const std::vector<Vec3> p = near_surface_points(posed_mesh(), 1024, 0.05, 7);
  return p;
}

ExecPolicy policy_arg(const benchmark::State& state) {
  return state.range(0) == 0 ? ExecPolicy::serial : ExecPolicy::parallel;
}

void BM_ClosestPointBvh(benchmark::State& state) {
  const TriangleBvh bvh(posed_mesh());
  for (auto _ : state) {
    for (const Vec3& x : probes()) benchmark::DoNotOptimize(bvh.closest(x));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(probes().size()));
}
BENCHMARK(BM_ClosestPointBvh);

void BM_ClosestPointExhaustive(benchmark::State& state) {
  for (auto _ : state) {
    for (const Vec3& x : probes()) benchmark::DoNotOptimize(closest_point_exhaustive(posed_mesh(), x));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(probes().size()));
}
BENCHMARK(BM_ClosestPointExhaustive);

void BM_SurfaceFieldGrid(benchmark::State& state) {
  const HeadRig& rig = bench_rig();
  const auto res = GridResolution::cube(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_sf_grid(rig, ShapeCode::zero(rig.shape_dim()),
                                           ExpressionCode::zero(rig.expression_dim()), bench_pose(), res,
                                           policy_arg(state)));
  }
}
BENCHMARK(BM_SurfaceFieldGrid)->ArgNames({"parallel", "res"})->Args({0, 16})->Args({1, 16})->Args({0, 32})->Args({1, 32})
    ->Unit(benchmark::kMillisecond);

void BM_RenderSingle(benchmark::State& state) {
  static const BakedField baked = bake_analytic(make_analytic_spec("ellipsoid-head", 1), 128, 32);
  const BoundingSphere bounds = bounding_sphere(posed_mesh().vertices);
  const Camera camera = camera_from_angles(0.1, 0.3, 0.0, 4.0, Vec3(0.0, 0.0, 0.03));
  RenderSettings settings;
  settings.policy = policy_arg(state);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_single(baked.planes, baked.decoder, IdentityWarp{}, camera, bounds, settings));
  }
}
BENCHMARK(BM_RenderSingle)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DeformationQuery(benchmark::State& state) {
  const HeadRig& rig = bench_rig();
  static const auto field = deformation_field(rig, ShapeCode::zero(rig.shape_dim()),
                                              ExpressionCode::zero(rig.expression_dim()), bench_pose());
  for (auto _ : state) {
    for (const Vec3& x : probes()) benchmark::DoNotOptimize((*field)(x));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(probes().size()));
}
BENCHMARK(BM_DeformationQuery);

}  // namespace

BENCHMARK_MAIN();
