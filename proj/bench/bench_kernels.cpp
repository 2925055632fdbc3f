// Serial reference vs OpenMP kernels on representative sizes.

#include <random>

#include <benchmark/benchmark.h>

#include "cqa/kernels.hpp"

namespace {

using namespace cqa;

std::vector<std::uint8_t> random_sites(Dims dims, double density, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::bernoulli_distribution bit(density);
  std::vector<std::uint8_t> v(dims.count());
  for (auto& x : v) x = bit(rng) ? 1 : 0;
  return v;
}

RowMatrix random_matrix(int rows, int cols, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  RowMatrix m(rows, cols);
  for (auto& x : m.data) x = g(rng);
  return m;
}

Mask2D disk_mask(int size, int radius) {
  Mask2D m(size, size);
  const int c = size / 2;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      m(x, y) = (x - c) * (x - c) + (y - c) * (y - c) <= radius * radius;
    }
  }
  return m;
}

template <auto Fn>
void BM_edt(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Dims dims{n, n, n / 2};
  const auto sites = random_sites(dims, 0.01, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fn(sites, dims, Spacing{0.98, 0.98, 2.5}));
  }
}

template <auto Fn>
void BM_gram(benchmark::State& state) {
  const auto x = random_matrix(static_cast<int>(state.range(0)), 24, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fn(x, 1.0 / 48));
  }
}

template <auto Fn>
void BM_expansion(benchmark::State& state) {
  const auto sv = random_matrix(200, 24, 3);
  const auto q = random_matrix(static_cast<int>(state.range(0)), 24, 4);
  const std::vector<double> coef(200, 1.0 / 200);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fn(sv, coef, 1.0 / 48, q));
  }
}

template <auto Fn>
void BM_dilate(benchmark::State& state) {
  const auto m = disk_mask(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)) / 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fn(m, 2));
  }
}

} // namespace

BENCHMARK(BM_edt<kernels::serial::squared_edt>)->Name("edt/serial")->Arg(64)->Arg(128);
BENCHMARK(BM_edt<kernels::omp::squared_edt>)->Name("edt/omp")->Arg(64)->Arg(128);
BENCHMARK(BM_gram<kernels::serial::rbf_gram>)->Name("rbf_gram/serial")->Arg(200)->Arg(800);
BENCHMARK(BM_gram<kernels::omp::rbf_gram>)->Name("rbf_gram/omp")->Arg(200)->Arg(800);
BENCHMARK(BM_expansion<kernels::serial::rbf_expansion>)
    ->Name("rbf_expansion/serial")
    ->Arg(1000)
    ->Arg(5000);
BENCHMARK(BM_expansion<kernels::omp::rbf_expansion>)
    ->Name("rbf_expansion/omp")
    ->Arg(1000)
    ->Arg(5000);
BENCHMARK(BM_dilate<kernels::serial::dilate>)->Name("dilate/serial")->Arg(224)->Arg(512);
BENCHMARK(BM_dilate<kernels::omp::dilate>)->Name("dilate/omp")->Arg(224)->Arg(512);

BENCHMARK_MAIN();
