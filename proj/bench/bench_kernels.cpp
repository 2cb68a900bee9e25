// Parallel kernels vs their serial reference implementations. Run with
// --benchmark_filter=... to narrow; the serial variants exist so the speedup
// (and the equivalence tested in tests/parallel_consistency) stays honest.
#include <benchmark/benchmark.h>

#include "crossview/camera.hpp"
#include "crossview/gca.hpp"
#include "crossview/geometry.hpp"
#include "crossview/raster.hpp"
#include "crossview/rng.hpp"
#include "crossview/synthdata.hpp"

using namespace crossview;

namespace {

struct Fixture {
    SceneSpec scene = make_scene(42, "boxes");
    SatMeta meta{};
    CameraModel cam = PanoramaCamera{};
    RelativePose pose{128.0, 128.0, 0.4, 2.0};
    Raster sat;
    Raster q;
    SampleGrid grid;

    Fixture()
        : sat(render_satellite(scene, meta)),
          q(1, camera_height(cam), camera_width(cam)),
          grid(ground_view_grid(cam, pose, meta, -pose.cam_height)) {}
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

void bm_warp_parallel(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(warp(f.sat, f.grid));
}

void bm_warp_serial(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(warp_serial(f.sat, f.grid));
}

void bm_gca_parallel(benchmark::State& state) {
    auto& f = fixture();
    const ZeroOffsetUniformPredictor pred;
    const HeightHypothesisSet hyp = pred.predict(f.q, default_heights());
    for (auto _ : state)
        benchmark::DoNotOptimize(gca_aggregate(f.q, f.sat, f.cam, f.pose, f.meta, hyp));
}

void bm_gca_serial(benchmark::State& state) {
    auto& f = fixture();
    const ZeroOffsetUniformPredictor pred;
    const HeightHypothesisSet hyp = pred.predict(f.q, default_heights());
    for (auto _ : state)
        benchmark::DoNotOptimize(gca_aggregate_serial(f.q, f.sat, f.cam, f.pose, f.meta, hyp));
}

void bm_render_satellite_parallel(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(render_satellite(f.scene, f.meta));
}

void bm_render_satellite_serial(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(render_satellite_serial(f.scene, f.meta));
}

void bm_render_ground_parallel(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(render_ground(f.scene, f.pose, f.cam));
}

void bm_render_ground_serial(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(render_ground_serial(f.scene, f.pose, f.cam));
}

BENCHMARK(bm_warp_parallel);
BENCHMARK(bm_warp_serial);
BENCHMARK(bm_gca_parallel);
BENCHMARK(bm_gca_serial);
BENCHMARK(bm_render_satellite_parallel);
BENCHMARK(bm_render_satellite_serial);
BENCHMARK(bm_render_ground_parallel);
BENCHMARK(bm_render_ground_serial);

}  // namespace

BENCHMARK_MAIN();
