#include "fdanet/raw/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fdanet::raw {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void NoiseModel::validate() const {
  if (!(photon_scale > 0)) throw ConfigError("noise model: photon scale k must be > 0");
  if (!(read_sigma >= 0)) throw ConfigError("noise model: read noise sigma must be >= 0");
}

BayerFrame add_low_light_noise(const BayerFrame& clean, const NoiseModel& nm, float dim_factor) {
  nm.validate();
  if (!(dim_factor > 0.0f && dim_factor <= 1.0f)) {
    throw ConfigError("dim factor " + std::to_string(dim_factor) + " must lie in (0, 1]");
  }
  clean.validate();
  std::mt19937_64 rng(nm.seed);
  std::normal_distribution<double> read(0.0, 1.0);
  BayerFrame noisy = clean;
  for (auto& v : noisy.data) {
    const double mean_photons = std::max(0.0, static_cast<double>(v) * dim_factor * nm.photon_scale);
    std::poisson_distribution<std::int64_t> shot(mean_photons > 0 ? mean_photons : 1e-300);
    const double photons = mean_photons > 0 ? static_cast<double>(shot(rng)) : 0.0;
    const double r = read(rng);
    v = static_cast<float>(photons / nm.photon_scale + nm.read_sigma * r);
  }
  return noisy;
}

std::vector<float> synth_latent_rgb(std::uint64_t seed, std::int64_t height, std::int64_t width) {
  if (height <= 0 || width <= 0) throw DimensionError("scene extents must be positive");
  std::mt19937_64 rng(mix_seed(seed, 0x5ce9e));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t plane = static_cast<std::size_t>(height * width);
  std::vector<float> rgb(3 * plane);

  // Smooth background: per-channel bilinear gradient.
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.15 + 0.5 * u(rng);
    gx[c] = 0.4 * (u(rng) - 0.5);
    gy[c] = 0.4 * (u(rng) - 0.5);
  }
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / width, fy = static_cast<double>(y) / height;
      for (int c = 0; c < 3; ++c)
        rgb[c * plane + y * width + x] = static_cast<float>(base[c] + gx[c] * fx + gy[c] * fy);
    }

  // Rectangles with random colors.
  const int rects = 3 + static_cast<int>(u(rng) * 5);
  for (int i = 0; i < rects; ++i) {
    const auto y0 = static_cast<std::int64_t>(u(rng) * height);
    const auto x0 = static_cast<std::int64_t>(u(rng) * width);
    const auto rh = 1 + static_cast<std::int64_t>(u(rng) * height / 2);
    const auto rw = 1 + static_cast<std::int64_t>(u(rng) * width / 2);
    double color[3];
    for (double& c : color) c = 0.05 + 0.9 * u(rng);
    for (std::int64_t y = y0; y < std::min(height, y0 + rh); ++y)
      for (std::int64_t x = x0; x < std::min(width, x0 + rw); ++x)
        for (int c = 0; c < 3; ++c) rgb[c * plane + y * width + x] = static_cast<float>(color[c]);
  }

  // Hard diagonal edge: brighten one half-plane.
  const double ax = u(rng) - 0.5, ay = u(rng) - 0.5, off = u(rng) - 0.5;
  const double gain = 0.6 + 0.8 * u(rng);
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / width - 0.5, fy = static_cast<double>(y) / height - 0.5;
      if (ax * fx + ay * fy > 0.3 * off) {
        for (int c = 0; c < 3; ++c) rgb[c * plane + y * width + x] *= static_cast<float>(gain);
      }
    }

  for (auto& v : rgb) v = std::clamp(v, 0.0f, 1.0f);
  return rgb;
}

BayerFrame mosaic(const std::vector<float>& latent_rgb, std::int64_t height, std::int64_t width) {
  const std::size_t plane = static_cast<std::size_t>(height * width);
  if (latent_rgb.size() != 3 * plane) {
    throw DimensionError("latent RGB buffer does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  BayerFrame f;
  f.height = height;
  f.width = width;
  f.data.resize(plane);
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      // RGGB: (even, even) R; (odd, odd) B; otherwise G.
      const int c = (y % 2 == 0 && x % 2 == 0) ? 0 : (y % 2 == 1 && x % 2 == 1) ? 2 : 1;
      f.at(y, x) = latent_rgb[c * plane + static_cast<std::size_t>(y * width + x)];
    }
  f.validate();
  return f;
}

BayerFrame synth_scene(std::uint64_t seed, std::int64_t height, std::int64_t width) {
  if (height % 2 != 0 || width % 2 != 0) {
    throw DimensionError("synthetic scene extents must be even");
  }
  return mosaic(synth_latent_rgb(seed, height, width), height, width);
}

}  // namespace fdanet::raw
