#include "fdanet/analysis/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

namespace fdanet::analysis {

namespace {

Tensor<float> random_tensor(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<float> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = static_cast<float>(u(rng));
  return Tensor<float>::from_data(shape, std::move(d));
}

int full_height(std::int64_t h) { return static_cast<int>(h); }

}  // namespace

std::vector<BenchPoint> bench_scaling(const BenchSpec& spec) {
  if (spec.repeats < 5) throw ConfigError("bench: repeats must be >= 5");
  if (spec.warmup < 1) throw ConfigError("bench: at least one warmup run is required");
  NoGradGuard guard;
  std::vector<BenchPoint> out;
  std::mt19937_64 rng(spec.seed);
  for (const auto& [h, w] : spec.grid) {
    const int lh = spec.local_height == 0 ? full_height(h) : spec.local_height;
    const Shape shape = {1, spec.channels, h, w};
    const auto q = random_tensor(shape, rng);
    const auto k = random_tensor(shape, rng);
    const auto v = random_tensor(shape, rng);
    for (int i = 0; i < spec.warmup; ++i) lineformer::line_attention(q, k, v, lh, spec.impl);
    std::vector<double> times;
    for (int i = 0; i < spec.repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      auto y = lineformer::line_attention(q, k, v, lh, spec.impl);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
      if (y.numel() == 0) throw NumericError("bench: empty output");
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2),
                     times.end());
    BenchPoint p;
    p.impl = spec.impl;
    p.height = h;
    p.width = w;
    p.channels = spec.channels;
    p.local_height = lh;
    p.median_ns = times[times.size() / 2];
    p.flops = lineformer::line_attention_macs(spec.impl, 1, spec.channels, h, w, lh);
    out.push_back(p);
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("loglog_slope needs at least two (x, y) pairs of equal count");
  }
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw DimensionError("loglog_slope: x values are all equal");
  return (n * sxy - sx * sy) / den;
}

double pixel_slope(const std::vector<BenchPoint>& points) {
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(static_cast<double>(p.height * p.width));
    y.push_back(p.median_ns);
  }
  return loglog_slope(x, y);
}

std::string bench_csv_line(const BenchPoint& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%lld,%lld,%lld,%d,%.0f,%llu", lineformer::to_string(p.impl),
                static_cast<long long>(p.height), static_cast<long long>(p.width),
                static_cast<long long>(p.channels), p.local_height, p.median_ns,
                static_cast<unsigned long long>(p.flops));
  return buf;
}

}  // namespace fdanet::analysis
