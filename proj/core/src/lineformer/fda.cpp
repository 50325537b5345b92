#include "fdanet/lineformer/fda.hpp"

#include "fdanet/nn/blocks.hpp"

namespace fdanet::lineformer {

const char* to_string(FdaKind k) {
  switch (k) {
    case FdaKind::lineformer: return "lineformer";
    case FdaKind::conv: return "conv";
    case FdaKind::channel_attention: return "channel_attention";
  }
  return "?";
}

FdaKind fda_kind_from_string(const std::string& s) {
  if (s == "lineformer") return FdaKind::lineformer;
  if (s == "conv") return FdaKind::conv;
  if (s == "channel_attention") return FdaKind::channel_attention;
  throw ConfigError("unknown fda_kind '" + s + "' (lineformer|conv|channel_attention)");
}

template <typename T>
FdaParams<T> FdaParams<T>::make(nn::ParamFactory<T>& f, const std::string& name,
                                std::int64_t channels, int local_height, int num_groups,
                                FdaKind kind) {
  validate_local_height(local_height);
  if (num_groups <= 0 || channels % num_groups != 0) {
    throw ConfigError(name + ": groupnorm_groups=" + std::to_string(num_groups) +
                      " does not divide channels " + std::to_string(channels));
  }
  FdaParams p;
  p.kind = kind;
  p.channels = channels;
  p.local_height = local_height;
  p.num_groups = num_groups;
  const int dw = static_cast<int>(channels);
  p.ln_gamma = f.constant(name + ".ln.gamma", {channels}, T(1));
  p.ln_beta = f.constant(name + ".ln.beta", {channels}, T(0));
  if (kind != FdaKind::conv) {
    p.q_pw = f.conv(name + ".q_pw", channels, channels, 1);
    p.q_dw = f.conv(name + ".q_dw", channels, channels, 3, dw);
    p.k_pw = f.conv(name + ".k_pw", channels, channels, 1);
    p.k_dw = f.conv(name + ".k_dw", channels, channels, 3, dw);
  }
  p.v_pw = f.conv(name + ".v_pw", channels, channels, 1);
  p.v_dw = f.conv(name + ".v_dw", channels, channels, 3, dw);
  if (kind == FdaKind::channel_attention) {
    p.temperature = f.constant(name + ".temperature", {1}, T(1));
  }
  if (kind == FdaKind::conv) p.mix_dw = f.conv(name + ".mix_dw", channels, channels, 7, dw);
  p.gn_gamma = f.constant(name + ".gn.gamma", {channels}, T(1));
  p.gn_beta = f.constant(name + ".gn.beta", {channels}, T(0));
  p.proj_pw = f.conv(name + ".proj_pw", channels, channels, 1);
  p.refine_pw = f.conv(name + ".refine_pw", channels, channels, 1);
  p.refine_dw = f.conv(name + ".refine_dw", channels, channels, 3, dw);
  return p;
}

template <typename T>
Qkv<T> qkv_project(const Tensor<T>& x, const FdaParams<T>& p) {
  if (!p.q_pw || !p.k_pw) {
    throw UsageError("qkv_project: FDA module of kind '" + std::string(to_string(p.kind)) +
                     "' has no query/key projections");
  }
  auto normed = layer_norm(x, p.ln_gamma, p.ln_beta);
  return {(*p.q_dw)((*p.q_pw)(normed)), (*p.k_dw)((*p.k_pw)(normed)), p.v_dw(p.v_pw(normed))};
}

template <typename T>
Tensor<T> fda_mix(const Tensor<T>& x, const FdaParams<T>& p, AttentionStrategy strategy) {
  if (x.rank() != 4 || x.dim(1) != p.channels) {
    throw DimensionError("fda: expected " + std::to_string(p.channels) +
                         " channels on axis 1, got " + shape_str(x.shape()));
  }
  switch (p.kind) {
    case FdaKind::lineformer: {
      auto [q, k, v] = qkv_project(x, p);
      return line_attention(q, k, v, p.local_height, strategy);
    }
    case FdaKind::channel_attention: {
      auto [q, k, v] = qkv_project(x, p);
      return nn::channel_attention_core(q, k, v, *p.temperature);
    }
    case FdaKind::conv:
      return (*p.mix_dw)(p.v_dw(p.v_pw(layer_norm(x, p.ln_gamma, p.ln_beta))));
  }
  throw ConfigError("fda: unknown kind");
}

template <typename T>
Tensor<T> fda_tail(const Tensor<T>& x, const Tensor<T>& ft, const FdaParams<T>& p) {
  auto adapted = p.proj_pw(group_norm(ft, p.num_groups, p.gn_gamma, p.gn_beta));
  return p.refine_dw(p.refine_pw(add(adapted, x)));
}

template <typename T>
Tensor<T> fda_forward(const Tensor<T>& x, const FdaParams<T>& p, AttentionStrategy strategy) {
  return fda_tail(x, fda_mix(x, p, strategy), p);
}

#define FDANET_INSTANTIATE_FDA(T)                                                              \
  template struct FdaParams<T>;                                                                \
  template Qkv<T> qkv_project(const Tensor<T>&, const FdaParams<T>&);                          \
  template Tensor<T> fda_mix(const Tensor<T>&, const FdaParams<T>&, AttentionStrategy);        \
  template Tensor<T> fda_tail(const Tensor<T>&, const Tensor<T>&, const FdaParams<T>&);        \
  template Tensor<T> fda_forward(const Tensor<T>&, const FdaParams<T>&, AttentionStrategy);

FDANET_INSTANTIATE_FDA(float)
FDANET_INSTANTIATE_FDA(double)

}  // namespace fdanet::lineformer
