#include <benchmark/benchmark.h>

#include "pcgrbm/kernels.hpp"
#include "pcgrbm/rng.hpp"

using namespace pcgrbm;
using kernels::Exec;

namespace {

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    Engine rng(seed);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
    return m;
}

Exec exec_of(const benchmark::State& state) { return state.range(1) == 0 ? Exec::serial : Exec::parallel; }

void set_label(benchmark::State& state) {
    state.SetLabel(state.range(1) == 0 ? "serial" : "parallel x" + std::to_string(kernels::num_threads()));
}

void BM_HiddenProbs(benchmark::State& state) {
    const auto n = state.range(0);
    const Matrix v = normal_matrix(n, 64, 1);
    const Matrix w = normal_matrix(64, 100, 2, 0.01);
    const Vector b = Vector::Zero(100), sigma = Vector::Ones(64);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::hidden_probs(v, w, b, sigma, exec_of(state)));
    set_label(state);
}

void BM_Reconstruct(benchmark::State& state) {
    const auto n = state.range(0);
    const Matrix h = normal_matrix(n, 100, 3);
    const Matrix w = normal_matrix(64, 100, 4, 0.01);
    const Vector a = Vector::Zero(64);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::reconstruct(h, w, a, exec_of(state)));
    set_label(state);
}

void BM_ConstraintGradient(benchmark::State& state) {
    const auto n = state.range(0);
    const Matrix diffs = normal_matrix(n, 100, 5);
    const Matrix w = normal_matrix(64, 100, 6, 0.01);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::constraint_gradient(w, diffs, exec_of(state)));
    set_label(state);
}

void BM_SquaredDistances(benchmark::State& state) {
    const Matrix x = normal_matrix(state.range(0), 16, 7);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::squared_distances(x, exec_of(state)));
    set_label(state);
}

void BM_AssignNearest(benchmark::State& state) {
    const Matrix x = normal_matrix(state.range(0), 16, 8);
    const Matrix c = normal_matrix(10, 16, 9);
    std::vector<Index> assignment;
    Vector dist;
    for (auto _ : state) {
        kernels::assign_nearest(x, c, assignment, dist, exec_of(state));
        benchmark::DoNotOptimize(dist.data());
    }
    set_label(state);
}

void BM_ApIteration(benchmark::State& state) {
    const Matrix x = normal_matrix(state.range(0), 8, 10);
    const Matrix s = -kernels::squared_distances(x, Exec::serial);
    Matrix a = Matrix::Zero(s.rows(), s.cols());
    for (auto _ : state) {
        const Matrix r = kernels::ap_responsibility(s, a, exec_of(state));
        a = kernels::ap_availability(r, exec_of(state));
        benchmark::DoNotOptimize(a.data());
    }
    set_label(state);
}

void sizes(benchmark::internal::Benchmark* b) {
    for (int n : {256, 2048})
        for (int parallel : {0, 1}) b->Args({n, parallel});
}

void ap_sizes(benchmark::internal::Benchmark* b) {
    for (int n : {200, 800})
        for (int parallel : {0, 1}) b->Args({n, parallel});
}

}  // namespace

BENCHMARK(BM_HiddenProbs)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Reconstruct)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConstraintGradient)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SquaredDistances)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AssignNearest)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ApIteration)->Apply(ap_sizes)->Unit(benchmark::kMicrosecond);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
