// Serial reference kernels against the OpenMP versions on shapes that show up
// in compilation (anchor Grams, ridge right-hand sides) and batch encoding.

#include <benchmark/benchmark.h>

#include "fedqhd/encoder.hpp"
#include "fedqhd/kernels.hpp"
#include "fedqhd/rng.hpp"

using namespace fedqhd;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// m anchors x D features.
void args_md(benchmark::internal::Benchmark* b) {
  for (int m : {200, 512})
    for (int d : {512, 2048}) b->Args({m, d});
}

template <Matrix (*Fn)(const Matrix&)>
void BM_Gram(benchmark::State& state) {
  const Matrix x = random_matrix(state.range(0), state.range(1), 1);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0) * state.range(1));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void BM_MatmulTn(benchmark::State& state) {
  const Matrix x = random_matrix(state.range(0), state.range(1), 2);
  const Matrix q = random_matrix(state.range(0), 4, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, q));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const Matrix a = random_matrix(n, n, 4), b = random_matrix(n, n, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

void BM_EncodeSerial(benchmark::State& state) {
  const RffEncoder enc({7, static_cast<std::size_t>(state.range(1)), 4, 1.0});
  const Matrix s = random_matrix(state.range(0), 4, 6);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode_batch_serial(s));
}

void BM_EncodeParallel(benchmark::State& state) {
  const RffEncoder enc({7, static_cast<std::size_t>(state.range(1)), 4, 1.0});
  const Matrix s = random_matrix(state.range(0), 4, 6);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode_batch(s));
}

}  // namespace

BENCHMARK(BM_Gram<kernels::serial::gram_rows>)->Name("gram_rows/serial")->Apply(args_md);
BENCHMARK(BM_Gram<kernels::parallel::gram_rows>)->Name("gram_rows/parallel")->Apply(args_md);
BENCHMARK(BM_Gram<kernels::serial::gram_cols>)->Name("gram_cols/serial")->Args({512, 512});
BENCHMARK(BM_Gram<kernels::parallel::gram_cols>)->Name("gram_cols/parallel")->Args({512, 512});
BENCHMARK(BM_MatmulTn<kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->Apply(args_md);
BENCHMARK(BM_MatmulTn<kernels::parallel::matmul_tn>)->Name("matmul_tn/parallel")->Apply(args_md);
BENCHMARK(BM_Matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_Matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(128)->Arg(512);
BENCHMARK(BM_EncodeSerial)->Name("encode_batch/serial")->Args({200, 4096});
BENCHMARK(BM_EncodeParallel)->Name("encode_batch/parallel")->Args({200, 4096});

BENCHMARK_MAIN();
