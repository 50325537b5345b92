#include "fdanet/nn/blocks.hpp"

namespace fdanet::nn {

namespace {

template <typename T>
void require_channels(const Tensor<T>& x, std::int64_t c, const char* block) {
  if (x.rank() != 4 || x.dim(1) != c) {
    throw DimensionError(std::string(block) + ": expected NCHW input with " + std::to_string(c) +
                         " channels on axis 1, got " + shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
CidBlockParams<T> CidBlockParams<T>::make(ParamFactory<T>& f, const std::string& name,
                                          std::int64_t channels, int expansion) {
  CidBlockParams p;
  p.channels = channels;
  p.expansion = expansion;
  p.depthwise = f.conv(name + ".dw", channels, channels, 7, static_cast<int>(channels));
  p.pointwise1 = f.conv(name + ".pw1", channels, expansion * channels, 1);
  p.pointwise2 = f.conv(name + ".pw2", expansion * channels, channels, 1);
  return p;
}

template <typename T>
Tensor<T> cid_block(const Tensor<T>& x, const CidBlockParams<T>& p) {
  require_channels(x, p.channels, "cid_block");
  return add(x, p.pointwise2(gelu(p.pointwise1(p.depthwise(x)))));
}

template <typename T>
DownsampleParams<T> DownsampleParams<T>::make(ParamFactory<T>& f, const std::string& name,
                                              std::int64_t channels) {
  return {f.conv(name, channels, 2 * channels, 2, 1, 2, 0)};
}

template <typename T>
Tensor<T> downsample(const Tensor<T>& x, const DownsampleParams<T>& p) {
  require_channels(x, p.conv.in_channels(), "downsample");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw DimensionError("downsample: spatial axes 2,3 of " + shape_str(x.shape()) +
                         " must be even");
  }
  return p.conv(x);
}

template <typename T>
UpsampleParams<T> UpsampleParams<T>::make(ParamFactory<T>& f, const std::string& name,
                                          std::int64_t channels) {
  if (channels % 2 != 0) {
    throw DimensionError("upsample: channel count " + std::to_string(channels) + " is odd");
  }
  return {f.conv(name, channels, 2 * channels, 1)};
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, const UpsampleParams<T>& p) {
  if (x.rank() == 4 && x.dim(1) % 2 != 0) {
    throw DimensionError("upsample: channel axis 1 of " + shape_str(x.shape()) + " is odd");
  }
  require_channels(x, p.conv.in_channels(), "upsample");
  return pixel_shuffle(p.conv(x), 2);
}

template <typename T>
ChannelAttentionParams<T> ChannelAttentionParams<T>::make(ParamFactory<T>& f,
                                                          const std::string& name,
                                                          std::int64_t channels) {
  ChannelAttentionParams p;
  p.channels = channels;
  const int groups = static_cast<int>(channels);
  p.q_pw = f.conv(name + ".q_pw", channels, channels, 1);
  p.q_dw = f.conv(name + ".q_dw", channels, channels, 3, groups);
  p.k_pw = f.conv(name + ".k_pw", channels, channels, 1);
  p.k_dw = f.conv(name + ".k_dw", channels, channels, 3, groups);
  p.v_pw = f.conv(name + ".v_pw", channels, channels, 1);
  p.v_dw = f.conv(name + ".v_dw", channels, channels, 3, groups);
  p.temperature = f.constant(name + ".temperature", {1}, T(1));
  p.out_pw = f.conv(name + ".out_pw", channels, channels, 1);
  return p;
}

template <typename T>
Tensor<T> channel_attention_map(const Tensor<T>& q, const Tensor<T>& k,
                                const Tensor<T>& temperature) {
  const std::int64_t n = q.dim(0), c = q.dim(1), hw = q.dim(2) * q.dim(3);
  auto qn = l2_normalize_rows(reshape(q, {n, c, hw}));
  auto kn = l2_normalize_rows(reshape(k, {n, c, hw}));
  return softmax_rows(scale(bmm(qn, kn, true), temperature));
}

template <typename T>
Tensor<T> channel_attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                 const Tensor<T>& temperature) {
  if (q.shape() != k.shape() || q.shape() != v.shape() || q.rank() != 4) {
    throw DimensionError("channel_attention: Q/K/V shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()) + " must agree");
  }
  const std::int64_t n = q.dim(0), c = q.dim(1), hw = q.dim(2) * q.dim(3);
  auto attn = channel_attention_map(q, k, temperature);
  return reshape(bmm(attn, reshape(v, {n, c, hw})), q.shape());
}

template <typename T>
Tensor<T> channel_global_attention(const Tensor<T>& x, const ChannelAttentionParams<T>& p) {
  require_channels(x, p.channels, "channel_global_attention");
  auto q = p.q_dw(p.q_pw(x));
  auto k = p.k_dw(p.k_pw(x));
  auto v = p.v_dw(p.v_pw(x));
  return add(x, p.out_pw(channel_attention_core(q, k, v, p.temperature)));
}

#define FDANET_INSTANTIATE_BLOCKS(T)                                                      \
  template struct CidBlockParams<T>;                                                      \
  template struct DownsampleParams<T>;                                                    \
  template struct UpsampleParams<T>;                                                      \
  template struct ChannelAttentionParams<T>;                                              \
  template Tensor<T> cid_block(const Tensor<T>&, const CidBlockParams<T>&);               \
  template Tensor<T> downsample(const Tensor<T>&, const DownsampleParams<T>&);            \
  template Tensor<T> upsample(const Tensor<T>&, const UpsampleParams<T>&);                \
  template Tensor<T> channel_attention_map(const Tensor<T>&, const Tensor<T>&,            \
                                           const Tensor<T>&);                             \
  template Tensor<T> channel_attention_core(const Tensor<T>&, const Tensor<T>&,           \
                                            const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> channel_global_attention(const Tensor<T>&, const ChannelAttentionParams<T>&);

FDANET_INSTANTIATE_BLOCKS(float)
FDANET_INSTANTIATE_BLOCKS(double)

}  // namespace fdanet::nn
