#pragma once

#include <optional>

#include "fdanet/model/fdanet.hpp"

namespace fdanet::train {

struct LossWeights {
  double rgb = 1.0;
  double raw = 1.0;
};

template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> rgb;                 // unweighted L1
  std::optional<Tensor<T>> raw;  // unweighted L1; absent without raw supervision
};

/// lambda_rgb * L1(y_rgb) + lambda_raw * L1(y_raw). The raw term exists only when
/// the network produced y_raw. Throws UsageError if y_raw is present but
/// `target_raw` is not.
template <typename T>
LossTerms<T> combined_loss(const model::NetworkOutputs<T>& out, const Tensor<T>& target_rgb,
                           const std::optional<Tensor<T>>& target_raw, const LossWeights& w);

}  // namespace fdanet::train
