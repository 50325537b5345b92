#include <benchmark/benchmark.h>

#include "fdanet/nn/blocks.hpp"

namespace {

void BM_CidBlock(benchmark::State& state) {
  const std::int64_t c = state.range(0), side = 64;
  fdanet::nn::ParamStore<float> ps;
  fdanet::nn::ParamFactory<float> f(ps, 1);
  const auto block = fdanet::nn::CidBlockParams<float>::make(f, "cid", c, 2);
  const auto x = fdanet::Tensor<float>::full({1, c, side, side}, 0.5f);
  fdanet::NoGradGuard guard;
  for (auto _ : state) {
    auto y = fdanet::nn::cid_block(x, block);
    benchmark::DoNotOptimize(y.data().data());
  }
}

void BM_Conv3x3(benchmark::State& state) {
  const std::int64_t c = state.range(0), side = 64;
  const auto x = fdanet::Tensor<float>::full({1, c, side, side}, 0.5f);
  const auto w = fdanet::Tensor<float>::full({c, c, 3, 3}, 0.01f);
  fdanet::NoGradGuard guard;
  for (auto _ : state) {
    auto y = fdanet::conv2d<float>(x, w, std::nullopt, fdanet::Conv2dOptions{1, 1, 1});
    benchmark::DoNotOptimize(y.data().data());
  }
}

}  // namespace

BENCHMARK(BM_CidBlock)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(16)->Arg(32);
