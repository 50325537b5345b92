#pragma once

#include <array>

#include "fdanet/raw/bayer.hpp"

namespace fdanet::raw {

/// Constants of the fixed reference ISP.
struct IspConstants {
  static constexpr std::array<double, 3> wb_gains = {2.0, 1.0, 1.5};  // R, G, B
  // Camera RGB -> linear sRGB; every row sums to 1 so neutral stays neutral.
  static constexpr std::array<std::array<double, 3>, 3> color_matrix = {{
      {1.6, -0.4, -0.2},
      {-0.3, 1.5, -0.2},
      {0.0, -0.5, 1.5},
  }};
  static constexpr double gamma = 2.2;
};

/// Packed raw [4, h, w] -> sRGB [3, 2h, 2w]: white balance, bilinear demosaic
/// (mirror borders), color matrix, clamp to [0, 1], power-law gamma 1/2.2.
Tensor<float> simple_isp(const Tensor<float>& raw_packed);

/// Batched variant for [N, 4, h, w] -> [N, 3, 2h, 2w].
Tensor<float> simple_isp_batch(const Tensor<float>& raw_packed);

}  // namespace fdanet::raw
