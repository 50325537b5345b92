#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fdanet/ops.hpp"
#include "fdanet/tensor.hpp"

namespace fdanet::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered registry of a model's learnable tensors. Handles share storage with
/// the blocks that use them.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(std::string name, Tensor<T> t) {
    t.set_requires_grad(true);
    items_.push_back({std::move(name), t});
    return t;
  }

  const std::vector<NamedParam<T>>& items() const { return items_; }
  std::vector<NamedParam<T>>& items() { return items_; }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
  }

  /// Parameters whose name starts with `prefix`.
  std::int64_t count(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& p : items_)
      if (p.name.rfind(prefix, 0) == 0) n += p.tensor.numel();
    return n;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p.tensor;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParam<T>> items_;
};

/// Convolution layer: weight, optional bias, geometry.
template <typename T>
struct Conv {
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
  Conv2dOptions opts;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, opts); }
  std::int64_t in_channels() const { return weight.dim(1) * opts.groups; }
  std::int64_t out_channels() const { return weight.dim(0); }
};

/// Creates parameters with Kaiming-uniform fan-in init (bound 1/sqrt(fan_in)),
/// zero biases, unit/zero norm affines. Values are drawn in f64 so f32 and f64
/// models built from one seed agree up to rounding.
template <typename T>
class ParamFactory {
 public:
  ParamFactory(ParamStore<T>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  Conv<T> conv(const std::string& name, std::int64_t cin, std::int64_t cout, int kernel,
               int groups = 1, int stride = 1, int padding = -1, bool bias = true) {
    if (padding < 0) padding = kernel / 2;
    const std::int64_t cin_g = cin / groups;
    const std::int64_t fan_in = cin_g * kernel * kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> w(static_cast<std::size_t>(cout * cin_g * kernel * kernel));
    for (auto& v : w) v = static_cast<T>(dist(rng_));
    Conv<T> c;
    c.weight = store_.add(name + ".weight",
                          Tensor<T>::from_data({cout, cin_g, kernel, kernel}, std::move(w)));
    if (bias) c.bias = store_.add(name + ".bias", Tensor<T>::zeros({cout}));
    c.opts = {stride, padding, groups};
    return c;
  }

  Tensor<T> constant(const std::string& name, Shape shape, T value) {
    return store_.add(name, Tensor<T>::full(std::move(shape), value));
  }

 private:
  ParamStore<T>& store_;
  std::mt19937_64 rng_;
};

}  // namespace fdanet::nn
