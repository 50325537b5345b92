#include "fdanet/model/fdanet.hpp"

#include "json.hpp"

namespace fdanet::model {

using lineformer::AttentionStrategy;

template <typename T>
Model<T> Model<T>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  nn::ParamFactory<T> f(m.params_, seed);
  const int scales = config.num_scales;
  const int e = config.cid_expansion;
  const std::string enc = kEncoderPrefix;

  m.intro_ = f.conv(enc + "intro", 4, config.channels_at(0), 3);
  for (int s = 0; s < scales; ++s) {
    EncoderStage stage;
    const auto c = config.channels_at(s);
    for (int b = 0; b < config.cid_blocks_per_scale; ++b) {
      stage.blocks.push_back(nn::CidBlockParams<T>::make(
          f, enc + "s" + std::to_string(s) + ".cid" + std::to_string(b), c, e));
    }
    if (s + 1 < scales) {
      stage.down = nn::DownsampleParams<T>::make(f, enc + "s" + std::to_string(s) + ".down", c);
    }
    m.encoder_.push_back(std::move(stage));
  }

  if (config.use_fda) {
    for (int s = 0; s < scales; ++s) {
      m.fda_.push_back(lineformer::FdaParams<T>::make(
          f, std::string(kFdaPrefix) + "s" + std::to_string(s), config.channels_at(s),
          config.local_height_at(s), config.groupnorm_groups, config.fda_kind));
    }
  }

  const std::string rgb = kRgbDecoderPrefix;
  m.rgb_.resize(static_cast<std::size_t>(scales));
  for (int s = scales - 1; s >= 0; --s) {
    auto& stage = m.rgb_[static_cast<std::size_t>(s)];
    const auto c = config.channels_at(s);
    const std::string name = rgb + "s" + std::to_string(s);
    if (s + 1 < scales) stage.up = nn::UpsampleParams<T>::make(f, name + ".up", 2 * c);
    stage.attention = nn::ChannelAttentionParams<T>::make(f, name + ".attn", c);
    stage.refine = nn::CidBlockParams<T>::make(f, name + ".cid", c, e);
  }
  m.rgb_head_ = f.conv(rgb + "head", config.channels_at(0), 12, 1);

  const std::string raw = kRawDecoderPrefix;
  m.raw_.resize(static_cast<std::size_t>(scales));
  for (int s = scales - 1; s >= 0; --s) {
    auto& stage = m.raw_[static_cast<std::size_t>(s)];
    const auto c = config.channels_at(s);
    const std::string name = raw + "s" + std::to_string(s);
    if (s + 1 < scales) {
      stage.up = nn::UpsampleParams<T>::make(f, name + ".up", 2 * c);
      stage.fuse = f.conv(name + ".fuse", 2 * c, c, 1);
    }
    for (int b = 0; b < config.cid_blocks_per_scale; ++b) {
      stage.blocks.push_back(
          nn::CidBlockParams<T>::make(f, name + ".cid" + std::to_string(b), c, e));
    }
  }
  m.raw_head_ = f.conv(raw + "head", config.channels_at(0), 4, 1);
  return m;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::encode(const Tensor<T>& x) const {
  config_.validate_input(x.shape());
  ++encoder_calls_;
  std::vector<Tensor<T>> features;
  Tensor<T> h = intro_(x);
  for (const auto& stage : encoder_) {
    for (const auto& block : stage.blocks) h = nn::cid_block(h, block);
    features.push_back(h);
    if (stage.down) h = nn::downsample(h, *stage.down);
  }
  return features;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::adapt(const std::vector<Tensor<T>>& features,
                                       AttentionStrategy strategy) const {
  if (!config_.use_fda) return features;
  std::vector<Tensor<T>> adapted;
  for (std::size_t s = 0; s < features.size(); ++s) {
    adapted.push_back(lineformer::fda_forward(features[s], fda_[s], strategy));
  }
  return adapted;
}

template <typename T>
Tensor<T> Model<T>::decode_rgb(const std::vector<Tensor<T>>& adapted) const {
  const int scales = config_.num_scales;
  Tensor<T> d;
  for (int s = scales - 1; s >= 0; --s) {
    const auto& stage = rgb_[static_cast<std::size_t>(s)];
    const auto& skip = adapted[static_cast<std::size_t>(s)];
    d = stage.up ? add(nn::upsample(d, *stage.up), skip) : skip;
    d = nn::channel_global_attention(d, stage.attention);
    d = nn::cid_block(d, stage.refine);
  }
  return pixel_shuffle(rgb_head_(d), 2);
}

template <typename T>
Tensor<T> Model<T>::decode_raw(const std::vector<Tensor<T>>& features) const {
  ++raw_decoder_calls_;
  const int scales = config_.num_scales;
  Tensor<T> d;
  for (int s = scales - 1; s >= 0; --s) {
    const auto& stage = raw_[static_cast<std::size_t>(s)];
    const auto& skip = features[static_cast<std::size_t>(s)];
    d = stage.up ? (*stage.fuse)(concat_channels(nn::upsample(d, *stage.up), skip)) : skip;
    for (const auto& block : stage.blocks) d = nn::cid_block(d, block);
  }
  return raw_head_(d);
}

namespace {

template <typename T>
std::vector<Tensor<T>> detached(const std::vector<Tensor<T>>& xs) {
  std::vector<Tensor<T>> out;
  for (const auto& x : xs) out.push_back(x.detach());
  return out;
}

}  // namespace

template <typename T>
NetworkOutputs<T> Model<T>::forward_train(const Tensor<T>& x, const ForwardOptions& opts) const {
  const auto features = encode(x);
  NetworkOutputs<T> out;
  const auto rgb_in = opts.detach_rgb_branch ? detached(features) : features;
  out.y_rgb = decode_rgb(adapt(rgb_in, opts.strategy));
  if (config_.use_raw_supervision) {
    out.y_raw = decode_raw(opts.detach_raw_branch ? detached(features) : features);
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::forward_infer(const Tensor<T>& x, const ForwardOptions& opts) const {
  return decode_rgb(adapt(encode(x), opts.strategy));
}

template <typename T>
Checkpoint to_checkpoint(const Model<T>& m) {
  Checkpoint ckpt;
  nlohmann::json meta;
  meta["model_config"] = nlohmann::json::parse(m.config().to_json());
  ckpt.metadata_json = meta.dump();
  for (const auto& p : m.params().items()) {
    ckpt.tensors.push_back(
        {p.name, p.tensor.shape(), std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  return ckpt;
}

template <typename T>
void save(const Model<T>& m, const std::filesystem::path& path) {
  save_checkpoint(path, to_checkpoint(m));
}

ModelConfig checkpoint_config(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.metadata_json);
  if (!meta.contains("model_config")) {
    throw FormatError("checkpoint metadata has no model_config");
  }
  try {
    return ModelConfig::from_json(meta["model_config"].dump());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model_config invalid: ") + e.what());
  }
}

template <typename T>
void load_into(Model<T>& m, const Checkpoint& ckpt) {
  for (auto& p : m.params().items()) {
    const CheckpointTensor* t = ckpt.find(p.name);
    if (!t) throw FormatError("checkpoint is missing tensor '" + p.name + "'");
    if (t->shape != p.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + p.name + "' has shape " + shape_str(t->shape) +
                           " but the model expects " + shape_str(p.tensor.shape()));
    }
  }
  for (auto& p : m.params().items()) {
    const CheckpointTensor* t = ckpt.find(p.name);
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t->values[i]);
  }
}

template <typename T>
void load_into(Model<T>& m, const std::filesystem::path& path) {
  load_into(m, load_checkpoint(path));
}

template <typename T>
Model<T> load(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  Model<T> m = Model<T>::build(checkpoint_config(ckpt), 0);
  load_into(m, ckpt);
  return m;
}

#define FDANET_INSTANTIATE_MODEL(T)                                       \
  template class Model<T>;                                                \
  template Checkpoint to_checkpoint(const Model<T>&);                     \
  template void save(const Model<T>&, const std::filesystem::path&);      \
  template Model<T> load<T>(const std::filesystem::path&);                \
  template void load_into(Model<T>&, const Checkpoint&);                  \
  template void load_into(Model<T>&, const std::filesystem::path&);

FDANET_INSTANTIATE_MODEL(float)
FDANET_INSTANTIATE_MODEL(double)

}  // namespace fdanet::model
