#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fdanet/raw/noise.hpp"

namespace fdanet::raw {

/// One training example.
struct SamplePair {
  Tensor<float> x;      // clamp(pack(noisy) * R, 0, 1), [4, H/2, W/2]
  Tensor<float> y_raw;  // pack(clean), [4, H/2, W/2]
  Tensor<float> y_rgb;  // simple_isp(y_raw), [3, H, W]
  float ratio = 1.0f;
};

struct SynthConfig {
  std::int64_t height = 160;  // mosaic extents
  std::int64_t width = 160;
  NoiseModel noise;  // noise.seed is ignored; per-sample seeds derive from `seed`
  std::vector<float> ratios = {50.0f, 100.0f, 250.0f};
  std::uint64_t seed = 0;
};

/// Sample `index` of the synthetic set. Pure in (config, index).
SamplePair make_sample(const SynthConfig& cfg, std::uint64_t index);

std::vector<SamplePair> make_dataset(const SynthConfig& cfg, std::size_t count);

/// Writes sample_NNNN_{x,y_raw,y_rgb}.fraw and manifest.json: a JSON array of
/// {"x","y_raw","y_rgb","ratio"} entries with paths relative to `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<SamplePair>& samples);

std::vector<SamplePair> read_dataset(const std::filesystem::path& dir);

}  // namespace fdanet::raw
