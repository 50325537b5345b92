#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fdanet/raw/bayer.hpp"

namespace fdanet::raw {

inline constexpr const char* kRawTensorMagic = "FRAW1";

/// Header fields of an FRAW1 file besides the shape.
struct RawTensorInfo {
  std::string pattern = "RGGB";
  std::optional<float> ratio;  // amplification R, when meaningful
};

/// "FRAW1" + length-prefixed JSON {"shape","dtype":"f32","pattern","ratio"} +
/// little-endian f32 payload.
void write_raw_tensor(const std::filesystem::path& path, const Tensor<float>& t,
                      const RawTensorInfo& info = {});

struct RawTensorFile {
  Tensor<float> tensor;
  RawTensorInfo info;
};

RawTensorFile read_raw_tensor(const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255) from [3, H, W] or [1, 3, H, W] values in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb);

/// Reads a P6 file back as [3, H, W] in [0, 1].
Tensor<float> read_ppm(const std::filesystem::path& path);

}  // namespace fdanet::raw
