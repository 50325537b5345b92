#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fdanet/nn/params.hpp"

namespace fdanet::train {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

/// Per-parameter moments, indexed like the ParamStore.
template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

/// One AdamW update of a single tensor at (1-based) step `t`:
///   p <- p - lr*wd*p                    (decoupled decay)
///   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::int64_t t, const AdamWConfig& cfg);

template <typename T>
class AdamW {
 public:
  AdamW(nn::ParamStore<T>& params, AdamWConfig cfg);

  /// Updates every parameter that holds a gradient; parameters without one
  /// (unused this step) are left untouched, including by weight decay.
  /// Throws NumericError naming the tensor if any gradient is non-finite.
  void step();

  const AdamWConfig& config() const { return cfg_; }
  OptimizerState<T>& state() { return state_; }
  const OptimizerState<T>& state() const { return state_; }

 private:
  nn::ParamStore<T>& params_;
  AdamWConfig cfg_;
  OptimizerState<T> state_;
};

}  // namespace fdanet::train
