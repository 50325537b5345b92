#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fdanet/lineformer/line_attention.hpp"

namespace fdanet::analysis {

struct BenchSpec {
  lineformer::AttentionStrategy impl = lineformer::AttentionStrategy::linear;
  std::vector<std::pair<std::int64_t, std::int64_t>> grid;  // (H, W)
  std::int64_t channels = 16;
  int local_height = 7;  // 0 means h = H, the full-height window
  int repeats = 5;
  int warmup = 1;
  std::uint64_t seed = 0;
};

struct BenchPoint {
  lineformer::AttentionStrategy impl = lineformer::AttentionStrategy::linear;
  std::int64_t height = 0, width = 0, channels = 0;
  int local_height = 0;
  double median_ns = 0.0;
  std::uint64_t flops = 0;  // analytic MACs
};

/// Times the forward pass of one attention strategy over a shape grid
/// (f32, batch 1, no autograd). Each point reports the median of `repeats`
/// timed runs after `warmup` untimed ones. Throws ConfigError if repeats < 5.
std::vector<BenchPoint> bench_scaling(const BenchSpec& spec);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Slope of log(median_ns) against log(H*W).
double pixel_slope(const std::vector<BenchPoint>& points);

inline constexpr const char* kBenchCsvHeader = "impl,H,W,C,h,median_ns,flops";
std::string bench_csv_line(const BenchPoint& p);

}  // namespace fdanet::analysis
