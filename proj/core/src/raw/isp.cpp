#include "fdanet/raw/isp.hpp"

#include <algorithm>
#include <cmath>

namespace fdanet::raw {

namespace {

// Color at mosaic site (y, x) for RGGB: 0 = R, 1 = G, 2 = B.
int site_color(std::int64_t y, std::int64_t x) {
  if (y % 2 == 0 && x % 2 == 0) return 0;
  if (y % 2 == 1 && x % 2 == 1) return 2;
  return 1;
}

// Mirror without repeating the edge sample; preserves Bayer parity.
std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

Tensor<float> simple_isp(const Tensor<float>& raw_packed) {
  if (raw_packed.rank() != 3 || raw_packed.dim(0) != 4) {
    throw DimensionError("simple_isp expects [4, h, w], got " + shape_str(raw_packed.shape()));
  }
  const BayerFrame frame = bayer_unpack(raw_packed);
  const std::int64_t h = frame.height, w = frame.width;

  std::vector<double> balanced(frame.data.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      balanced[y * w + x] = frame.at(y, x) * IspConstants::wb_gains[site_color(y, x)];

  const std::size_t plane = static_cast<std::size_t>(h * w);
  std::vector<float> out(3 * plane);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      // Bilinear: average same-color sites of the 3x3 neighbourhood.
      double sum[3] = {0, 0, 0};
      int count[3] = {0, 0, 0};
      const int own = site_color(y, x);
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const std::int64_t yy = reflect(y + dy, h), xx = reflect(x + dx, w);
          const int c = site_color(yy, xx);
          sum[c] += balanced[yy * w + xx];
          ++count[c];
        }
      double cam[3];
      for (int c = 0; c < 3; ++c) cam[c] = c == own ? balanced[y * w + x] : sum[c] / count[c];
      for (int c = 0; c < 3; ++c) {
        const auto& row = IspConstants::color_matrix[static_cast<std::size_t>(c)];
        const double lin = std::clamp(row[0] * cam[0] + row[1] * cam[1] + row[2] * cam[2], 0.0, 1.0);
        out[c * plane + static_cast<std::size_t>(y * w + x)] =
            static_cast<float>(std::pow(lin, 1.0 / IspConstants::gamma));
      }
    }
  return Tensor<float>::from_data({3, h, w}, std::move(out));
}

Tensor<float> simple_isp_batch(const Tensor<float>& raw_packed) {
  if (raw_packed.rank() != 4 || raw_packed.dim(1) != 4) {
    throw DimensionError("simple_isp_batch expects [N, 4, h, w], got " +
                         shape_str(raw_packed.shape()));
  }
  const std::int64_t n = raw_packed.dim(0), h = raw_packed.dim(2), w = raw_packed.dim(3);
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(n * 3 * 4 * h * w));
  for (std::int64_t i = 0; i < n; ++i) {
    auto first = raw_packed.data().begin() + i * 4 * h * w;
    auto one = simple_isp(Tensor<float>::from_data({4, h, w}, std::vector<float>(first, first + 4 * h * w)));
    out.insert(out.end(), one.data().begin(), one.data().end());
  }
  return Tensor<float>::from_data({n, 3, 2 * h, 2 * w}, std::move(out));
}

}  // namespace fdanet::raw
