#pragma once

#include <string>

#include "fdanet/nn/params.hpp"

namespace fdanet::nn {

/// Channel-independent denoising block: depthwise 7x7, pointwise expand,
/// GELU, pointwise project, residual.
template <typename T>
struct CidBlockParams {
  std::int64_t channels = 0;
  int expansion = 2;
  Conv<T> depthwise;   // [C, 1, 7, 7], groups = C
  Conv<T> pointwise1;  // [E*C, C, 1, 1]
  Conv<T> pointwise2;  // [C, E*C, 1, 1]

  static CidBlockParams make(ParamFactory<T>& f, const std::string& name, std::int64_t channels,
                             int expansion = 2);
};

template <typename T>
Tensor<T> cid_block(const Tensor<T>& x, const CidBlockParams<T>& p);

/// Strided 2x2 conv doubling channels.
template <typename T>
struct DownsampleParams {
  Conv<T> conv;
  static DownsampleParams make(ParamFactory<T>& f, const std::string& name, std::int64_t channels);
};

template <typename T>
Tensor<T> downsample(const Tensor<T>& x, const DownsampleParams<T>& p);

/// 1x1 conv to 2C channels followed by a x2 pixel shuffle: C -> C/2, 2H x 2W.
template <typename T>
struct UpsampleParams {
  Conv<T> conv;
  static UpsampleParams make(ParamFactory<T>& f, const std::string& name, std::int64_t channels);
};

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, const UpsampleParams<T>& p);

/// Transposed (channel-to-channel) attention with a global receptive field.
template <typename T>
struct ChannelAttentionParams {
  std::int64_t channels = 0;
  Conv<T> q_pw, q_dw, k_pw, k_dw, v_pw, v_dw;
  Tensor<T> temperature;  // [1]
  Conv<T> out_pw;

  static ChannelAttentionParams make(ParamFactory<T>& f, const std::string& name,
                                     std::int64_t channels);
};

/// softmax(temperature * Qn Kn^T) V over C x (HW) matrices, with Qn, Kn
/// L2-normalized along HW. Inputs and output are NCHW.
template <typename T>
Tensor<T> channel_attention_core(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                 const Tensor<T>& temperature);

/// The C x C attention map for one batch; exposed for inspection.
template <typename T>
Tensor<T> channel_attention_map(const Tensor<T>& q, const Tensor<T>& k,
                                const Tensor<T>& temperature);

/// x + out_pw(channel_attention_core(q(x), k(x), v(x))).
template <typename T>
Tensor<T> channel_global_attention(const Tensor<T>& x, const ChannelAttentionParams<T>& p);

}  // namespace fdanet::nn
