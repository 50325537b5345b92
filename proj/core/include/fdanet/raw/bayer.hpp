#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdanet/tensor.hpp"

namespace fdanet::raw {

enum class CfaPattern { rggb };

/// Throws FormatError for anything other than "RGGB".
CfaPattern cfa_pattern_from_string(const std::string& s);
const char* to_string(CfaPattern p);

/// Single-channel mosaiced frame, values normalized by (v - black) / (white - black).
struct BayerFrame {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> data;  // row-major H x W
  CfaPattern pattern = CfaPattern::rggb;
  float black_level = 0.0f;
  float white_level = 1.0f;

  float at(std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>(y * width + x)]; }
  float& at(std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>(y * width + x)]; }

  /// Even extents, matching buffer size, finite values.
  void validate() const;
};

/// Normalizes sensor counts to [0, 1] using the frame's black/white levels.
BayerFrame from_counts(std::int64_t height, std::int64_t width, const std::vector<std::uint16_t>& counts,
                       float black_level, float white_level);

/// [4, H/2, W/2] with channels R, G1, G2, B taken from each 2x2 tile.
Tensor<float> bayer_pack(const BayerFrame& frame);

/// Inverse of bayer_pack for a [4, h, w] tensor.
BayerFrame bayer_unpack(const Tensor<float>& packed);

/// clamp(x * ratio, 0, 1). Throws ConfigError for ratio < 1.
Tensor<float> amplify(const Tensor<float>& x, float ratio);

}  // namespace fdanet::raw
