#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "fdanet/checkpoint.hpp"
#include "fdanet/lineformer/fda.hpp"
#include "fdanet/model/config.hpp"
#include "fdanet/nn/blocks.hpp"

namespace fdanet::model {

struct ForwardOptions {
  lineformer::AttentionStrategy strategy = lineformer::AttentionStrategy::linear;
  /// Feed the sRGB branch a detached copy of the encoder features.
  bool detach_rgb_branch = false;
  /// Feed the raw branch a detached copy of the encoder features.
  bool detach_raw_branch = false;
};

template <typename T>
struct NetworkOutputs {
  Tensor<T> y_rgb;                // [N, 3, 2H, 2W]
  std::optional<Tensor<T>> y_raw;  // [N, 4, H, W], train graph with raw supervision only
};

/// Parameter-name prefixes of the four sub-networks.
inline constexpr const char* kEncoderPrefix = "encoder.";
inline constexpr const char* kFdaPrefix = "fda.";
inline constexpr const char* kRgbDecoderPrefix = "rgb_decoder.";
inline constexpr const char* kRawDecoderPrefix = "raw_decoder.";

/// Shared raw encoder, one feature-domain-adaptation module per scale, an sRGB
/// decoder built from channel-attention blocks, and an auxiliary raw decoder
/// that only the train graph evaluates.
template <typename T>
class Model {
 public:
  struct EncoderStage {
    std::vector<nn::CidBlockParams<T>> blocks;
    std::optional<nn::DownsampleParams<T>> down;  // absent at the coarsest scale
  };
  struct RgbStage {
    std::optional<nn::UpsampleParams<T>> up;  // from scale s+1, absent at the coarsest
    nn::ChannelAttentionParams<T> attention;
    nn::CidBlockParams<T> refine;
  };
  struct RawStage {
    std::optional<nn::UpsampleParams<T>> up;
    std::optional<nn::Conv<T>> fuse;  // 1x1 over [upsampled, skip] concatenation
    std::vector<nn::CidBlockParams<T>> blocks;
  };

  static Model build(const ModelConfig& config, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Multi-scale encoder features, finest first.
  std::vector<Tensor<T>> encode(const Tensor<T>& x) const;
  /// Adapted features for the sRGB branch (identity when use_fda is off).
  std::vector<Tensor<T>> adapt(const std::vector<Tensor<T>>& features,
                               lineformer::AttentionStrategy strategy) const;
  Tensor<T> decode_rgb(const std::vector<Tensor<T>>& adapted) const;
  Tensor<T> decode_raw(const std::vector<Tensor<T>>& features) const;

  NetworkOutputs<T> forward_train(const Tensor<T>& x, const ForwardOptions& opts = {}) const;
  /// sRGB-only graph; never touches the raw decoder.
  Tensor<T> forward_infer(const Tensor<T>& x, const ForwardOptions& opts = {}) const;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.count(); }

  std::uint64_t encoder_calls() const { return encoder_calls_; }
  std::uint64_t raw_decoder_calls() const { return raw_decoder_calls_; }

  const nn::Conv<T>& intro() const { return intro_; }
  const std::vector<EncoderStage>& encoder() const { return encoder_; }
  const std::vector<lineformer::FdaParams<T>>& fda() const { return fda_; }
  const std::vector<RgbStage>& rgb_decoder() const { return rgb_; }
  const nn::Conv<T>& rgb_head() const { return rgb_head_; }
  const std::vector<RawStage>& raw_decoder() const { return raw_; }
  const nn::Conv<T>& raw_head() const { return raw_head_; }

 private:
  Model() = default;

  ModelConfig config_;
  nn::ParamStore<T> params_;
  nn::Conv<T> intro_;
  std::vector<EncoderStage> encoder_;
  std::vector<lineformer::FdaParams<T>> fda_;
  std::vector<RgbStage> rgb_;
  nn::Conv<T> rgb_head_;  // C0 -> 12, then pixel shuffle x2
  std::vector<RawStage> raw_;
  nn::Conv<T> raw_head_;  // C0 -> 4
  mutable std::uint64_t encoder_calls_ = 0;
  mutable std::uint64_t raw_decoder_calls_ = 0;
};

/// Parameters as f32 tensors plus {"model_config": ...} metadata.
template <typename T>
Checkpoint to_checkpoint(const Model<T>& m);

template <typename T>
void save(const Model<T>& m, const std::filesystem::path& path);

/// Rebuilds a model from the config stored in the checkpoint.
template <typename T>
Model<T> load(const std::filesystem::path& path);

/// Overwrites the parameters of an existing model. Missing tensors raise
/// FormatError; shape disagreements raise DimensionError naming the tensor.
template <typename T>
void load_into(Model<T>& m, const Checkpoint& ckpt);

template <typename T>
void load_into(Model<T>& m, const std::filesystem::path& path);

/// Model config stored in a checkpoint's metadata.
ModelConfig checkpoint_config(const Checkpoint& ckpt);

}  // namespace fdanet::model
