#include "fdanet/lineformer/line_buffer.hpp"

#include <algorithm>
#include <cassert>
#include <string>

#include "fdanet/errors.hpp"
#include "fdanet/lineformer/line_attention.hpp"

namespace fdanet::lineformer {

template <typename T>
LineBufferState<T>::LineBufferState(std::int64_t channels, std::int64_t width,
                                    std::int64_t height, int local_height)
    : channels_(channels),
      width_(width),
      height_(height),
      local_height_(local_height),
      half_(window_half(local_height, height)),
      window_sum_(static_cast<std::size_t>(channels * channels), 0.0) {
  validate_local_height(local_height, height);
  if (channels <= 0 || width <= 0 || height <= 0) {
    throw DimensionError("LineBufferState: extents must be positive");
  }
}

template <typename T>
std::size_t LineBufferState<T>::state_numbers() const {
  const auto c2 = static_cast<std::size_t>(channels_ * channels_);
  return ring_.size() * c2 + c2;
}

template <typename T>
std::size_t LineBufferState<T>::peak_state_numbers() const {
  const auto c2 = static_cast<std::size_t>(channels_ * channels_);
  return peak_occupancy_ * c2 + c2;
}

template <typename T>
std::vector<OutputRow<T>> LineBufferState<T>::push_row(std::int64_t row, std::span<const T> q_row,
                                                      std::span<const T> k_row,
                                                      std::span<const T> v_row) {
  if (row != next_input_ || row >= height_) {
    throw ProtocolError("LineBufferState: expected input row " + std::to_string(next_input_) +
                        " of " + std::to_string(height_) + ", got " + std::to_string(row));
  }
  const auto row_len = static_cast<std::size_t>(channels_ * width_);
  if (q_row.size() != row_len || k_row.size() != row_len || v_row.size() != row_len) {
    throw DimensionError("LineBufferState: row buffers must hold C*W = " +
                         std::to_string(row_len) + " values");
  }
  std::vector<OutputRow<T>> out;
  // The newest row completes the window of output row `row - half`; drop the
  // aggregates that window no longer covers before adding it.
  if (row > half_) {
    const std::int64_t first = row_window(row - half_, height_, local_height_).first;
    while (!ring_.empty() && ring_.front().row < first) {
      const auto& a = ring_.front().aggregate;
      for (std::size_t i = 0; i < a.size(); ++i) window_sum_[i] -= a[i];
      ring_.pop_front();
    }
  }
  Slot slot{row, std::vector<double>(static_cast<std::size_t>(channels_ * channels_))};
  row_aggregate<T>(k_row, v_row, channels_, width_, slot.aggregate);
  for (std::size_t i = 0; i < slot.aggregate.size(); ++i) window_sum_[i] += slot.aggregate[i];
  ring_.push_back(std::move(slot));
  peak_occupancy_ = std::max(peak_occupancy_, ring_.size());
  assert(ring_.size() <= static_cast<std::size_t>(local_height_));

  pending_q_.emplace_back(q_row.begin(), q_row.end());
  peak_pending_q_ = std::max(peak_pending_q_, pending_q_.size());
  ++next_input_;
  emit_ready(out, next_input_ == height_);
  return out;
}

template <typename T>
void LineBufferState<T>::emit_ready(std::vector<OutputRow<T>>& out, bool flush) {
  // Output r needs input rows up to min(r + half, H - 1).
  if (next_output_ < height_ &&
      row_window(next_output_, height_, local_height_).last < next_input_) {
    emit_one(out);
  }
  if (!flush) return;
  while (next_output_ < height_) {
    const std::int64_t first = row_window(next_output_, height_, local_height_).first;
    while (!ring_.empty() && ring_.front().row < first) {
      const auto& a = ring_.front().aggregate;
      for (std::size_t i = 0; i < a.size(); ++i) window_sum_[i] -= a[i];
      ring_.pop_front();
    }
    emit_one(out);
  }
}

template <typename T>
void LineBufferState<T>::emit_one(std::vector<OutputRow<T>>& out) {
  assert(!pending_q_.empty());
  const RowWindow win = row_window(next_output_, height_, local_height_);
  // The running sum must cover exactly the window of the row being emitted.
  assert(!ring_.empty() && ring_.front().row == win.first && ring_.back().row == win.last);
  (void)win;
  OutputRow<T> row{next_output_, std::vector<T>(static_cast<std::size_t>(channels_ * width_))};
  apply_aggregate<T>(pending_q_.front(), window_sum_, channels_, width_, row.values);
  pending_q_.pop_front();
  out.push_back(std::move(row));
  ++next_output_;
}

template class LineBufferState<float>;
template class LineBufferState<double>;

}  // namespace fdanet::lineformer
