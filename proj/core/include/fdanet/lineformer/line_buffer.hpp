#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace fdanet::lineformer {

/// One finished output row, channel-major [C * W].
template <typename T>
struct OutputRow {
  std::int64_t index;
  std::vector<T> values;
};

/// Line-buffer executor for one image.
///
/// Rows arrive top to bottom. Each consumed row contributes one C x C
/// aggregate to a ring buffer of at most h entries; a running window sum M is
/// kept by adding the newest aggregate and subtracting the one leaving the
/// window. Output row r is emitted once input row r + (h-1)/2 (or the last
/// row) has arrived. Query rows waiting for their window are held separately
/// and are not part of the key/value state.
template <typename T>
class LineBufferState {
 public:
  LineBufferState(std::int64_t channels, std::int64_t width, std::int64_t height,
                  int local_height);

  /// Consumes input row `row` (must equal rows_consumed()). Returns the output
  /// rows that became ready, in order.
  std::vector<OutputRow<T>> push_row(std::int64_t row, std::span<const T> q_row,
                                     std::span<const T> k_row, std::span<const T> v_row);

  std::int64_t rows_consumed() const { return next_input_; }
  std::int64_t rows_emitted() const { return next_output_; }
  bool done() const { return next_output_ == height_; }

  std::size_t occupancy() const { return ring_.size(); }
  std::size_t peak_occupancy() const { return peak_occupancy_; }
  /// Numbers held as key/value state: ring aggregates plus the running sum.
  std::size_t state_numbers() const;
  std::size_t peak_state_numbers() const;
  std::size_t peak_pending_query_rows() const { return peak_pending_q_; }

 private:
  struct Slot {
    std::int64_t row;
    std::vector<double> aggregate;
  };

  void emit_ready(std::vector<OutputRow<T>>& out, bool flush);
  void emit_one(std::vector<OutputRow<T>>& out);

  std::int64_t channels_, width_, height_;
  int local_height_;
  std::int64_t half_;
  std::deque<Slot> ring_;
  std::vector<double> window_sum_;
  std::deque<std::vector<T>> pending_q_;
  std::int64_t next_input_ = 0;
  std::int64_t next_output_ = 0;
  std::size_t peak_occupancy_ = 0;
  std::size_t peak_pending_q_ = 0;
};

}  // namespace fdanet::lineformer
