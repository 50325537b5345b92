#pragma once

#include <cstdint>
#include <vector>

#include "fdanet/raw/bayer.hpp"

namespace fdanet::raw {

/// Poisson-Gaussian sensor noise.
struct NoiseModel {
  double photon_scale = 4000.0;  // k: photons per unit of normalized signal
  double read_sigma = 2e-4;      // Gaussian read noise, normalized units
  std::uint64_t seed = 0;

  void validate() const;
};

/// noisy = Poisson(clean * dim_factor * k) / k + N(0, read_sigma^2), seeded.
/// Throws ConfigError unless 0 < dim_factor <= 1.
BayerFrame add_low_light_noise(const BayerFrame& clean, const NoiseModel& nm, float dim_factor);

/// Latent linear RGB scene [3, H, W] in [0, 1]: smooth gradients, random
/// rectangles and a hard diagonal edge. Deterministic in (seed, H, W).
std::vector<float> synth_latent_rgb(std::uint64_t seed, std::int64_t height, std::int64_t width);

/// Samples the latent scene through an RGGB mosaic.
BayerFrame mosaic(const std::vector<float>& latent_rgb, std::int64_t height, std::int64_t width);

/// mosaic(synth_latent_rgb(seed, H, W)). H and W must be even.
BayerFrame synth_scene(std::uint64_t seed, std::int64_t height, std::int64_t width);

/// Stateless 64-bit mixer used to derive per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace fdanet::raw
