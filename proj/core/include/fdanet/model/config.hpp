#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdanet/lineformer/fda.hpp"

namespace fdanet::model {

/// Architecture hyperparameters and ablation switches.
struct ModelConfig {
  int num_scales = 3;
  int base_channels = 16;  // channels at scale 0; doubled per scale
  int cid_blocks_per_scale = 2;
  std::vector<int> local_height = {7, 7, 7};  // one odd h per scale
  int groupnorm_groups = 4;
  int cid_expansion = 2;

  bool use_fda = true;
  bool use_raw_supervision = true;
  lineformer::FdaKind fda_kind = lineformer::FdaKind::lineformer;

  /// Small network used by gradient checks and smoke training.
  static ModelConfig tiny();

  std::int64_t channels_at(int scale) const {
    return static_cast<std::int64_t>(base_channels) << scale;
  }
  int local_height_at(int scale) const { return local_height.at(static_cast<std::size_t>(scale)); }
  /// Spatial extents of the packed input must be multiples of this.
  std::int64_t spatial_multiple() const { return std::int64_t{1} << (num_scales - 1); }

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Throws DimensionError unless x is [N, 4, H, W] with divisible H, W.
  void validate_input(const Shape& packed_shape) const;

  std::string to_json() const;
  /// Accepts a JSON object with any subset of the fields above; `local_height`
  /// may be a single integer applied to every scale.
  static ModelConfig from_json(const std::string& text, const ModelConfig& base);
  static ModelConfig from_json(const std::string& text) { return from_json(text, ModelConfig{}); }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace fdanet::model
