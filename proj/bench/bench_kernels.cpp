// Serial reference kernels vs their OpenMP counterparts on the dense-layer
// shapes of the default network (17 -> 128 -> 64 -> 1), plus one full
// training-sized forward/backward pass through the model.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ddgen/kernels.hpp"
#include "ddgen/model.hpp"

namespace {

using ddgen::kernels::DenseShape;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) {
        x = u(rng);
    }
    return v;
}

DenseShape shape_from(const benchmark::State& state) {
    return {static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
            static_cast<std::size_t>(state.range(2))};
}

template <auto Kernel>
void BM_Forward(benchmark::State& state) {
    const DenseShape s = shape_from(state);
    const auto x = random_vector(s.batch * s.in, 1);
    const auto w = random_vector(s.in * s.out, 2);
    const auto b = random_vector(s.out, 3);
    std::vector<double> y(s.batch * s.out);
    for (auto _ : state) {
        Kernel(s, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.batch * s.in * s.out));
}

template <auto Kernel>
void BM_BackwardParams(benchmark::State& state) {
    const DenseShape s = shape_from(state);
    const auto x = random_vector(s.batch * s.in, 1);
    const auto dy = random_vector(s.batch * s.out, 2);
    std::vector<double> dw(s.in * s.out);
    std::vector<double> db(s.out);
    for (auto _ : state) {
        Kernel(s, x, dy, dw, db);
        benchmark::DoNotOptimize(dw.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.batch * s.in * s.out));
}

template <auto Kernel>
void BM_BackwardInput(benchmark::State& state) {
    const DenseShape s = shape_from(state);
    const auto w = random_vector(s.in * s.out, 1);
    const auto dy = random_vector(s.batch * s.out, 2);
    std::vector<double> dx(s.batch * s.in);
    for (auto _ : state) {
        Kernel(s, w, dy, dx);
        benchmark::DoNotOptimize(dx.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.batch * s.in * s.out));
}

void layer_shapes(benchmark::internal::Benchmark* b) {
    for (std::int64_t batch : {256, 2048}) {
        b->Args({batch, 17, 128});
        b->Args({batch, 128, 64});
    }
}

BENCHMARK(BM_Forward<ddgen::kernels::serial::dense_forward>)->Apply(layer_shapes);
BENCHMARK(BM_Forward<ddgen::kernels::omp::dense_forward>)->Apply(layer_shapes);
BENCHMARK(BM_BackwardParams<ddgen::kernels::serial::dense_backward_params>)->Apply(layer_shapes);
BENCHMARK(BM_BackwardParams<ddgen::kernels::omp::dense_backward_params>)->Apply(layer_shapes);
BENCHMARK(BM_BackwardInput<ddgen::kernels::serial::dense_backward_input>)->Apply(layer_shapes);
BENCHMARK(BM_BackwardInput<ddgen::kernels::omp::dense_backward_input>)->Apply(layer_shapes);

template <auto Kernel>
void BM_Activate(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto src = random_vector(n, 5);
    std::vector<double> z(n);
    for (auto _ : state) {
        z = src;
        Kernel(ddgen::Activation::tanh, z);
        benchmark::DoNotOptimize(z.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Activate<ddgen::kernels::serial::activate>)->Arg(2048 * 128);
BENCHMARK(BM_Activate<ddgen::kernels::omp::activate>)->Arg(2048 * 128);

void BM_ModelForwardBackward(benchmark::State& state) {
    ddgen::ModelConfig cfg;
    cfg.rows = 4;
    cfg.cols = 4;
    const ddgen::DualFunctionModel model(cfg);
    const auto rows = static_cast<std::size_t>(state.range(0));
    ddgen::InputBatch inputs{rows, model.input_width(), random_vector(rows * model.input_width(), 4)};
    std::vector<double> upstream(rows, 1.0);
    std::vector<double> grad(model.parameter_count());
    for (auto _ : state) {
        const auto cache = model.forward_batch(inputs);
        model.backward_batch(cache, upstream, grad);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(256)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();
