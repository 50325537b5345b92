#include "fdanet/raw/bayer.hpp"

#include <algorithm>
#include <cmath>

namespace fdanet::raw {

CfaPattern cfa_pattern_from_string(const std::string& s) {
  if (s == "RGGB") return CfaPattern::rggb;
  throw FormatError("unsupported CFA pattern '" + s + "' (only RGGB)");
}

const char* to_string(CfaPattern) { return "RGGB"; }

void BayerFrame::validate() const {
  if (height <= 0 || width <= 0 || height % 2 != 0 || width % 2 != 0) {
    throw DimensionError("Bayer frame extents " + std::to_string(height) + "x" +
                         std::to_string(width) + " must be positive and even");
  }
  if (static_cast<std::int64_t>(data.size()) != height * width) {
    throw DimensionError("Bayer frame buffer holds " + std::to_string(data.size()) +
                         " values for " + std::to_string(height) + "x" + std::to_string(width));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError("Bayer frame contains a non-finite value");
  }
}

BayerFrame from_counts(std::int64_t height, std::int64_t width,
                       const std::vector<std::uint16_t>& counts, float black_level,
                       float white_level) {
  if (!(white_level > black_level)) {
    throw ConfigError("white level must exceed black level");
  }
  BayerFrame f;
  f.height = height;
  f.width = width;
  f.black_level = black_level;
  f.white_level = white_level;
  f.data.resize(counts.size());
  const float range = white_level - black_level;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    f.data[i] = std::clamp((static_cast<float>(counts[i]) - black_level) / range, 0.0f, 1.0f);
  }
  f.validate();
  return f;
}

Tensor<float> bayer_pack(const BayerFrame& frame) {
  frame.validate();
  const std::int64_t h = frame.height / 2, w = frame.width / 2;
  std::vector<float> out(static_cast<std::size_t>(4 * h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t o = y * w + x;
      out[static_cast<std::size_t>(0 * h * w + o)] = frame.at(2 * y, 2 * x);          // R
      out[static_cast<std::size_t>(1 * h * w + o)] = frame.at(2 * y, 2 * x + 1);      // G1
      out[static_cast<std::size_t>(2 * h * w + o)] = frame.at(2 * y + 1, 2 * x);      // G2
      out[static_cast<std::size_t>(3 * h * w + o)] = frame.at(2 * y + 1, 2 * x + 1);  // B
    }
  return Tensor<float>::from_data({4, h, w}, std::move(out));
}

BayerFrame bayer_unpack(const Tensor<float>& packed) {
  if (packed.rank() != 3 || packed.dim(0) != 4) {
    throw DimensionError("bayer_unpack expects [4, h, w], got " + shape_str(packed.shape()));
  }
  const std::int64_t h = packed.dim(1), w = packed.dim(2);
  BayerFrame f;
  f.height = 2 * h;
  f.width = 2 * w;
  f.data.resize(static_cast<std::size_t>(4 * h * w));
  const auto p = packed.data();
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t o = y * w + x;
      f.at(2 * y, 2 * x) = p[static_cast<std::size_t>(o)];
      f.at(2 * y, 2 * x + 1) = p[static_cast<std::size_t>(h * w + o)];
      f.at(2 * y + 1, 2 * x) = p[static_cast<std::size_t>(2 * h * w + o)];
      f.at(2 * y + 1, 2 * x + 1) = p[static_cast<std::size_t>(3 * h * w + o)];
    }
  return f;
}

Tensor<float> amplify(const Tensor<float>& x, float ratio) {
  if (!(ratio >= 1.0f)) {
    throw ConfigError("amplification ratio R=" + std::to_string(ratio) + " must be >= 1");
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v * ratio, 0.0f, 1.0f);
  return Tensor<float>::from_data(x.shape(), std::move(out));
}

}  // namespace fdanet::raw
