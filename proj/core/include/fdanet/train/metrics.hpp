#pragma once

#include "fdanet/tensor.hpp"

namespace fdanet::train {

inline constexpr double kPsnrCap = 99.0;

/// 10*log10(peak^2 / MSE), capped at 99 dB (identical inputs report the cap).
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double peak = 1.0);

}  // namespace fdanet::train
