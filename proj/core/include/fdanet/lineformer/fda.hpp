#pragma once

#include <optional>
#include <string>

#include "fdanet/lineformer/line_attention.hpp"
#include "fdanet/nn/params.hpp"

namespace fdanet::lineformer {

/// Token mixer inside the feature-domain-adaptation module. `lineformer` is
/// the line attention; the other two exist for ablations.
enum class FdaKind { lineformer, conv, channel_attention };

const char* to_string(FdaKind k);
FdaKind fda_kind_from_string(const std::string& s);

/// Parameters of one FDA module:
///
///   Q, K, V = DConv3x3(PConv(LayerNorm(x)))      (independent weights)
///   Ft      = mix(Q, K, V)
///   y       = DConv3x3(PConv(PConv(GroupNorm(Ft)) + x))
///
/// The `conv` kind only has the V projection and mixes it with a depthwise
/// 7x7; `channel_attention` adds a temperature for transposed attention.
template <typename T>
struct FdaParams {
  FdaKind kind = FdaKind::lineformer;
  std::int64_t channels = 0;
  int local_height = 7;
  int num_groups = 4;

  Tensor<T> ln_gamma, ln_beta;
  std::optional<nn::Conv<T>> q_pw, q_dw, k_pw, k_dw;
  nn::Conv<T> v_pw, v_dw;
  std::optional<Tensor<T>> temperature;
  std::optional<nn::Conv<T>> mix_dw;
  Tensor<T> gn_gamma, gn_beta;
  nn::Conv<T> proj_pw, refine_pw, refine_dw;

  static FdaParams make(nn::ParamFactory<T>& f, const std::string& name, std::int64_t channels,
                        int local_height, int num_groups, FdaKind kind = FdaKind::lineformer);
};

template <typename T>
struct Qkv {
  Tensor<T> q, k, v;
};

/// LayerNorm then per-head PConv + DConv. Requires a lineformer or
/// channel_attention module.
template <typename T>
Qkv<T> qkv_project(const Tensor<T>& x, const FdaParams<T>& p);

/// The token-mixing stage, Ft.
template <typename T>
Tensor<T> fda_mix(const Tensor<T>& x, const FdaParams<T>& p,
                  AttentionStrategy strategy = AttentionStrategy::linear);

/// DConv(PConv(PConv(GroupNorm(ft)) + x)).
template <typename T>
Tensor<T> fda_tail(const Tensor<T>& x, const Tensor<T>& ft, const FdaParams<T>& p);

template <typename T>
Tensor<T> fda_forward(const Tensor<T>& x, const FdaParams<T>& p,
                      AttentionStrategy strategy = AttentionStrategy::linear);

}  // namespace fdanet::lineformer
