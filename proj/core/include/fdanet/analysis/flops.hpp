#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdanet/model/fdanet.hpp"

namespace fdanet::analysis {

/// One named block of the network. MACs count one multiply-add once; norms
/// cost two per element and elementwise ops are free.
struct BlockCount {
  std::string name;
  std::uint64_t macs = 0;
  std::int64_t params = 0;
  bool in_train = false;  // evaluated by forward_train
  bool in_infer = false;  // evaluated by forward_infer
};

struct FlopsReport {
  Shape input_shape;
  lineformer::AttentionStrategy strategy = lineformer::AttentionStrategy::linear;
  std::vector<BlockCount> blocks;

  std::uint64_t train_macs() const;
  std::uint64_t infer_macs() const;
  std::int64_t total_params() const;
  std::int64_t infer_params() const;
  /// Sum over blocks whose name starts with `prefix`.
  std::uint64_t macs_with_prefix(const std::string& prefix) const;
  std::int64_t params_with_prefix(const std::string& prefix) const;

  std::string to_json() const;
  std::string to_table() const;
};

/// Analytic MAC and parameter counts for a [N,4,H,W] input. Throws
/// DimensionError if H or W is not a multiple of the model's spatial multiple.
template <typename T>
FlopsReport count_flops(const model::Model<T>& m, const Shape& input_shape,
                        lineformer::AttentionStrategy strategy = lineformer::AttentionStrategy::linear);

std::uint64_t conv_macs(std::int64_t n, std::int64_t cin, std::int64_t cout, std::int64_t ho,
                        std::int64_t wo, std::int64_t kh, std::int64_t kw, std::int64_t groups = 1);

}  // namespace fdanet::analysis
