// Serial vs OpenMP kernels. Arg 0 selects the dimension, arg 1 the thread count.
#include <random>

#include <benchmark/benchmark.h>

#include "cbvr/kernels.hpp"

namespace {

using namespace cbvr;

constexpr int kRows = 20000;

RowMatrixF random_features(int n, int d) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g;
  RowMatrixF x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

template <bool Parallel>
void BM_DenseScores(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  set_thread_count(static_cast<int>(state.range(1)));
  const auto x = random_features(kRows, d);
  std::vector<double> w(d, 0.01);
  for (auto _ : state) {
    auto s = Parallel ? kernels::omp::dense_scores(x, w, 0.5) : kernels::serial::dense_scores(x, w, 0.5);
    benchmark::DoNotOptimize(s.data());
  }
  state.SetItemsProcessed(state.iterations() * kRows);
}

// Codes for d / 8 subspaces with 256 centroids each, as with the default PQ.
template <bool Parallel>
void BM_LutScores(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0)) / 8;
  set_thread_count(static_cast<int>(state.range(1)));
  std::mt19937_64 rng(11);
  CodeMatrix codes(kRows, m);
  for (Eigen::Index i = 0; i < codes.size(); ++i) codes.data()[i] = static_cast<std::uint8_t>(rng() & 0xff);
  RowMatrixD lut = RowMatrixD::Random(m, 256);
  for (auto _ : state) {
    auto s = Parallel ? kernels::omp::lut_scores(codes, lut, 0.5) : kernels::serial::lut_scores(codes, lut, 0.5);
    benchmark::DoNotOptimize(s.data());
  }
  state.SetItemsProcessed(state.iterations() * kRows);
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  set_thread_count(static_cast<int>(state.range(1)));
  const RowMatrixD x = random_features(5000, d).cast<double>();
  const RowMatrixD c = random_features(256, d).cast<double>();
  for (auto _ : state) {
    auto a = Parallel ? kernels::omp::assign_nearest(x, c) : kernels::serial::assign_nearest(x, c);
    benchmark::DoNotOptimize(a.index.data());
  }
}

template <bool Parallel>
void BM_AdditiveGram(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  set_thread_count(static_cast<int>(state.range(1)));
  const RowMatrixD x = random_features(300, d).cast<double>().cwiseAbs();
  for (auto _ : state) {
    auto g = Parallel ? kernels::omp::additive_gram(x, x, AdditiveKernel::Chi2)
                      : kernels::serial::additive_gram(x, x, AdditiveKernel::Chi2);
    benchmark::DoNotOptimize(g.data());
  }
}

void Args(benchmark::internal::Benchmark* b) {
  for (int d : {64, 512, 4096}) b->Args({d, 1});
}

void ParallelArgs(benchmark::internal::Benchmark* b) {
  for (int d : {64, 512, 4096})
    for (int t : {1, 2, 4}) b->Args({d, t});
}

}  // namespace

BENCHMARK(BM_DenseScores<false>)->Apply(Args);
BENCHMARK(BM_DenseScores<true>)->Apply(ParallelArgs);
BENCHMARK(BM_LutScores<false>)->Apply(Args);
BENCHMARK(BM_LutScores<true>)->Apply(ParallelArgs);
BENCHMARK(BM_AssignNearest<false>)->Apply(Args);
BENCHMARK(BM_AssignNearest<true>)->Apply(ParallelArgs);
BENCHMARK(BM_AdditiveGram<false>)->Args({64, 1})->Args({512, 1});
BENCHMARK(BM_AdditiveGram<true>)->Args({64, 1})->Args({64, 4})->Args({512, 1})->Args({512, 4});

BENCHMARK_MAIN();
