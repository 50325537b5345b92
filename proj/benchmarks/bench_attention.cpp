#include <benchmark/benchmark.h>

#include <random>

#include "fdanet/lineformer/line_attention.hpp"

namespace {

using fdanet::Tensor;
using fdanet::lineformer::AttentionStrategy;

Tensor<float> noise(const fdanet::Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> d(static_cast<std::size_t>(fdanet::shape_numel(s)));
  for (auto& v : d) v = u(rng);
  return Tensor<float>::from_data(s, std::move(d));
}

template <AttentionStrategy S>
void BM_LineAttentionWidth(benchmark::State& state) {
  const std::int64_t c = 16, h = 16, w = state.range(0);
  const auto q = noise({1, c, h, w}, 1), k = noise({1, c, h, w}, 2), v = noise({1, c, h, w}, 3);
  fdanet::NoGradGuard guard;
  for (auto _ : state) {
    auto y = fdanet::lineformer::line_attention(q, k, v, 7, S);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetComplexityN(h * w);
}

void BM_NaiveFullHeight(benchmark::State& state) {
  const std::int64_t c = 8, side = state.range(0);
  const auto q = noise({1, c, side, side}, 1), k = noise({1, c, side, side}, 2),
             v = noise({1, c, side, side}, 3);
  fdanet::NoGradGuard guard;
  for (auto _ : state) {
    auto y = fdanet::lineformer::line_attention_naive(q, k, v, static_cast<int>(side));
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetComplexityN(side * side);
}

}  // namespace

BENCHMARK_TEMPLATE(BM_LineAttentionWidth, AttentionStrategy::linear)
    ->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oN);
BENCHMARK_TEMPLATE(BM_LineAttentionWidth, AttentionStrategy::streaming)
    ->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oN);
BENCHMARK(BM_NaiveFullHeight)->DenseRange(8, 32, 8)->Complexity(benchmark::oNSquared);
