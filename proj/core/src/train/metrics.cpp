#include "fdanet/train/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fdanet::train {

template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double peak) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("psnr: shapes differ, " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  if (!(peak > 0)) throw ConfigError("psnr: peak must be > 0");
  const auto a = pred.data();
  const auto b = target.data();
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = a.empty() ? 0.0 : se / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

template double psnr(const Tensor<float>&, const Tensor<float>&, double);
template double psnr(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace fdanet::train
