#include "fdanet/train/adamw.hpp"

#include <cmath>

namespace fdanet::train {

void AdamWConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("train config field 'lr': must be > 0");
  if (!(beta1 > 0 && beta1 < 1)) throw ConfigError("train config field 'beta1': must lie in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("train config field 'beta2': must lie in (0, 1)");
  if (!(eps > 0)) throw ConfigError("train config field 'eps': must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("train config field 'weight_decay': must be >= 0");
}

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::int64_t t, const AdamWConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double p = param[i];
    const double g = grad[i];
    p -= cfg.lr * cfg.weight_decay * p;
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    p -= cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
    param[i] = static_cast<T>(p);
  }
}

template <typename T>
AdamW<T>::AdamW(nn::ParamStore<T>& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_.items()) {
    state_.m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
    state_.v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
  }
}

template <typename T>
void AdamW<T>::step() {
  auto& items = params_.items();
  for (const auto& p : items) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "'; training aborted");
      }
    }
  }
  ++state_.step;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& t = items[i].tensor;
    if (!t.has_grad()) continue;
    adamw_update<T>(t.mutable_data(), t.grad(), state_.m[i], state_.v[i], state_.step, cfg_);
  }
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                  std::span<float>, std::int64_t, const AdamWConfig&);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                   std::span<double>, std::int64_t, const AdamWConfig&);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace fdanet::train
