#include "motionkit/kernels.hpp"
#include "motionkit/synth.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace motionkit;

namespace {

struct Fixture {
    SkinnedBody body = make_standard_body();
    ShapedRest rest;
    std::array<JointTransform, kJointCount> transforms;
    std::vector<Vec3> points;
    KdTree tree;
    TriangleBvh bvh;

    Fixture()
        : rest(body.shaped(BodyShape{})),
          tree(random_points(20000, 1)),
          bvh(make_synth_scene(SynthSpec{})) {
        const PoseFrame f = synth_pose_at(SynthSpec{}, body, rest, 1.3);
        transforms = pose_skeleton(body, f, rest).transforms;
        points = random_points(50000, 2);
    }

    static std::vector<Vec3> random_points(size_t n, unsigned seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        std::vector<Vec3> p(n);
        for (auto& x : p) x = Vec3(u(rng), u(rng), u(rng) + 1.0);
        return p;
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

template <auto Kernel>
void BM_skin(benchmark::State& state) {
    const auto& f = fixture();
    std::vector<Vec3> out(f.rest.vertices.size());
    for (auto _ : state) {
        Kernel(f.body, f.transforms, f.rest.vertices, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <auto Kernel>
void BM_nearest(benchmark::State& state) {
    const auto& f = fixture();
    std::vector<double> out(f.points.size());
    for (auto _ : state) {
        Kernel(f.tree, f.points, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <auto Kernel>
void BM_penetration(benchmark::State& state) {
    const auto& f = fixture();
    std::vector<double> out(f.points.size());
    for (auto _ : state) {
        Kernel(f.bvh, f.points, out);
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_skin<kernels::serial::skin>)->Name("skin/serial");
BENCHMARK(BM_skin<kernels::omp::skin>)->Name("skin/omp")->UseRealTime();
BENCHMARK(BM_nearest<kernels::serial::nearest_sq_distances>)->Name("nearest/serial");
BENCHMARK(BM_nearest<kernels::omp::nearest_sq_distances>)->Name("nearest/omp")->UseRealTime();
BENCHMARK(BM_penetration<kernels::serial::penetration_depths>)->Name("penetration/serial");
BENCHMARK(BM_penetration<kernels::omp::penetration_depths>)->Name("penetration/omp")->UseRealTime();

BENCHMARK_MAIN();
