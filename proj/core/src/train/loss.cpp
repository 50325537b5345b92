#include "fdanet/train/loss.hpp"

namespace fdanet::train {

template <typename T>
LossTerms<T> combined_loss(const model::NetworkOutputs<T>& out, const Tensor<T>& target_rgb,
                           const std::optional<Tensor<T>>& target_raw, const LossWeights& w) {
  LossTerms<T> terms;
  terms.rgb = l1_loss(out.y_rgb, target_rgb);
  terms.total = mul_scalar(terms.rgb, w.rgb);
  if (out.y_raw) {
    if (!target_raw) throw UsageError("combined_loss: network produced y_raw but no raw target was given");
    terms.raw = l1_loss(*out.y_raw, *target_raw);
    terms.total = add(terms.total, mul_scalar(*terms.raw, w.raw));
  }
  return terms;
}

template LossTerms<float> combined_loss(const model::NetworkOutputs<float>&, const Tensor<float>&,
                                        const std::optional<Tensor<float>>&, const LossWeights&);
template LossTerms<double> combined_loss(const model::NetworkOutputs<double>&, const Tensor<double>&,
                                         const std::optional<Tensor<double>>&, const LossWeights&);

}  // namespace fdanet::train
