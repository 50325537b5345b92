#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fdanet/tensor.hpp"

namespace fdanet::lineformer {

/// Line-global, column-local, softmax-free attention:
///
///   out_i = Q_i * sum_{j : row(j) in window(row(i))} K_j^T V_j
///
/// where window(r) = [r - (h-1)/2, r + (h-1)/2] clipped to [0, H). All
/// queries on one row share the same C x C key-value aggregate.
enum class AttentionStrategy {
  naive,      // per-query loop over all hW keys, O(H W h W C)
  linear,     // per-row aggregates + sliding window sum, O(H W C^2)
  streaming,  // row-at-a-time line-buffer executor, same arithmetic as linear
};

const char* to_string(AttentionStrategy s);
AttentionStrategy attention_strategy_from_string(const std::string& s);

/// Rows [first, last] of the window centred on `row`. A local height of at
/// least H is the full-height window: every row sees every row.
struct RowWindow {
  std::int64_t first;
  std::int64_t last;
};
RowWindow row_window(std::int64_t row, std::int64_t height, int local_height);

/// Throws ConfigError unless local_height is a positive odd integer.
void validate_local_height(int local_height);
/// As above, except that any h >= H (the full-height window) is accepted.
void validate_local_height(int local_height, std::int64_t height);
std::int64_t window_half(int local_height, std::int64_t height);

/// A_r[a][b] = sum_w K[a, w] V[b, w] for one row, accumulated in f64.
/// Rows are channel-major: k_row[a * width + w].
template <typename T>
void row_aggregate(std::span<const T> k_row, std::span<const T> v_row, std::int64_t channels,
                   std::int64_t width, std::span<double> out);

/// out[b, w] = sum_a Q[a, w] M[a][b].
template <typename T>
void apply_aggregate(std::span<const T> q_row, std::span<const double> window_sum,
                     std::int64_t channels, std::int64_t width, std::span<T> out);

template <typename T>
Tensor<T> line_attention_naive(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               int local_height);

template <typename T>
Tensor<T> line_attention_linear(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                int local_height);

/// Whole-image convenience wrapper that feeds rows through LineBufferState.
template <typename T>
Tensor<T> line_attention_streaming(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                   int local_height);

/// Dispatches to one strategy. Every strategy shares one analytic backward.
template <typename T>
Tensor<T> line_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         int local_height, AttentionStrategy strategy);

/// MAC counts of each strategy for one [N, C, H, W] call.
std::uint64_t line_attention_macs(AttentionStrategy s, std::int64_t n, std::int64_t c,
                                  std::int64_t h, std::int64_t w, int local_height);

}  // namespace fdanet::lineformer
