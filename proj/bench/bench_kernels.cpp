// Serial reference kernels against their parallel counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "lexeval/geometry.hpp"
#include "lexeval/kernels.hpp"

namespace lexeval {
namespace {

std::vector<float> unit_rows(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  const std::size_t padded = kernels::padded_dim(dim);
  std::vector<float> raw(dim), out(rows * padded);
  for (std::size_t i = 0; i < rows; ++i) {
    for (float& v : raw) v = g(rng);
    kernels::normalize_row(raw, {out.data() + i * padded, padded});
  }
  return out;
}

std::vector<Point3> cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 10.0f);
  std::vector<Point3> p(n);
  for (auto& q : p) q = {u(rng), u(rng), u(rng) * 0.3f};
  return p;
}

// args: query rows, labels, dim
void similarity_args(benchmark::internal::Benchmark* b) {
  b->Args({64, 3500, 1024})->Args({1024, 1150, 512})->Args({4096, 200, 64});
}

template <auto Kernel>
void BM_Similarity(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto labels = static_cast<std::size_t>(state.range(1));
  const auto dim = static_cast<std::size_t>(state.range(2));
  const std::size_t padded = kernels::padded_dim(dim);
  const auto q = unit_rows(rows, dim, 1);
  const auto l = unit_rows(labels, dim, 2);
  std::vector<float> out(rows * labels);
  for (auto _ : state) {
    Kernel(q.data(), rows, l.data(), labels, padded, out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["GFMA/s"] = benchmark::Counter(static_cast<double>(rows * labels * padded),
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Similarity<kernels::serial::similarity>)->Name("similarity/serial")->Apply(similarity_args);
BENCHMARK(BM_Similarity<kernels::parallel::similarity>)->Name("similarity/parallel")->Apply(similarity_args);
BENCHMARK(BM_Similarity<kernels::similarity_block>)->Name("similarity/blocked")->Apply(similarity_args);

template <auto Kernel>
void BM_LabelRank(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> sims(n);
  for (float& s : sims) s = u(rng);
  std::uint32_t label = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Kernel(sims, label));
    label = (label + 97) % static_cast<std::uint32_t>(n);
  }
}
BENCHMARK(BM_LabelRank<kernels::serial::label_rank>)->Name("label_rank/serial_sort")->Arg(1150)->Arg(3500);
BENCHMARK(BM_LabelRank<kernels::label_rank>)->Name("label_rank/counting")->Arg(1150)->Arg(3500);

void BM_TopK(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> sims(static_cast<std::size_t>(state.range(0)));
  for (float& s : sims) s = u(rng);
  std::vector<std::uint32_t> out(10);
  for (auto _ : state) {
    kernels::top_k(sims, 10, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_TopK)->Name("top_k/10")->Arg(1150)->Arg(3500);

template <auto Kernel>
void BM_Match(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto gt = cloud(n, 5);
  const auto pred = cloud(n, 6);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(gt, pred, 0.05));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Match<kernels::serial::match_points>)->Name("match_points/serial_brute")->Arg(2000)->Arg(8000);
BENCHMARK(BM_Match<kernels::parallel::match_points>)->Name("match_points/parallel_grid")->Arg(2000)->Arg(8000)->Arg(1000000);

void BM_Downsample(benchmark::State& state) {
  const auto p = cloud(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(voxel_downsample(p, 0.05));
}
BENCHMARK(BM_Downsample)->Name("voxel_downsample")->Arg(100000)->Arg(1000000);

}  // namespace
}  // namespace lexeval

BENCHMARK_MAIN();
