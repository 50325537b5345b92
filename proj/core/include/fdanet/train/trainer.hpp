#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdanet/model/fdanet.hpp"
#include "fdanet/raw/dataset.hpp"
#include "fdanet/train/adamw.hpp"
#include "fdanet/train/loss.hpp"

namespace fdanet::train {

struct TrainConfig {
  AdamWConfig optim;
  std::int64_t steps = 500;
  std::int64_t batch_size = 1;
  std::int64_t eval_every = 100;  // 0 disables evaluation and periodic checkpoints
  std::int64_t crop = 64;         // packed-domain crop side
  std::int64_t eval_samples = 4;  // leading dataset samples used for PSNR
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  lineformer::AttentionStrategy strategy = lineformer::AttentionStrategy::linear;

  void validate() const;
  std::string to_json() const;
  /// Overrides fields of `base` with the keys present in `text`. Unknown keys
  /// raise ConfigError.
  static TrainConfig from_json(const std::string& text, const TrainConfig& base);
};

struct MetricsRow {
  std::int64_t step = 0;  // 1-based count of completed optimizer steps
  double loss_total = 0.0;
  double loss_rgb = 0.0;
  std::optional<double> loss_raw;
  std::optional<double> psnr;
};

inline constexpr const char* kMetricsCsvHeader = "step,loss_total,loss_rgb,loss_raw,psnr";
std::string metrics_csv_line(const MetricsRow& row);

/// Batch-size-1 (or larger) crops drawn from an in-memory dataset. Sample order
/// is a seeded permutation per epoch and crop offsets derive from (seed, draw
/// index), so a run is a pure function of (model, data, config).
class Trainer {
 public:
  Trainer(model::Model<float>& model, std::vector<raw::SamplePair> data, TrainConfig cfg);

  MetricsRow step();

  /// Trains until `cfg.steps` optimizer steps have completed. When
  /// `checkpoint_dir` is set, writes step_NNNNNN.fdat and last.fdat at every
  /// evaluation and at the end.
  void run(const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
           const std::function<void(const MetricsRow&)>& on_row = {});

  /// Mean PSNR (peak 1) of the inference graph over the evaluation samples.
  double evaluate() const;

  /// Model parameters, optimizer moments, and the step counter.
  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;
  void resume(const Checkpoint& ckpt);
  void resume(const std::filesystem::path& path);

  std::int64_t completed_steps() const { return step_; }
  const std::vector<MetricsRow>& log() const { return log_; }
  void write_csv(const std::filesystem::path& path) const;
  const TrainConfig& config() const { return cfg_; }
  const AdamW<float>& optimizer() const { return optim_; }

  struct Batch {
    Tensor<float> x, y_raw, y_rgb;
  };
  /// The batch consumed by optimizer step `step_index` (0-based).
  Batch batch_at(std::int64_t step_index) const;

 private:
  std::size_t sample_for_draw(std::uint64_t draw) const;
  std::int64_t crop_side(const raw::SamplePair& s) const;

  model::Model<float>& model_;
  std::vector<raw::SamplePair> data_;
  TrainConfig cfg_;
  AdamW<float> optim_;
  std::int64_t step_ = 0;
  std::vector<MetricsRow> log_;
  mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  mutable std::vector<std::size_t> cached_perm_;
};

}  // namespace fdanet::train
