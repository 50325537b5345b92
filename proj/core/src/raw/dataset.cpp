#include "fdanet/raw/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "fdanet/raw/isp.hpp"
#include "fdanet/raw/raw_io.hpp"
#include "json.hpp"

namespace fdanet::raw {

using nlohmann::json;

SamplePair make_sample(const SynthConfig& cfg, std::uint64_t index) {
  if (cfg.ratios.empty()) throw ConfigError("synthetic set needs at least one ratio R");
  const std::uint64_t s = mix_seed(cfg.seed, index);
  const float ratio = cfg.ratios[static_cast<std::size_t>(mix_seed(s, 1) % cfg.ratios.size())];
  const BayerFrame clean = synth_scene(s, cfg.height, cfg.width);
  NoiseModel nm = cfg.noise;
  nm.seed = mix_seed(s, 2);
  const BayerFrame noisy = add_low_light_noise(clean, nm, 1.0f / ratio);
  SamplePair p;
  p.ratio = ratio;
  p.x = amplify(bayer_pack(noisy), ratio);
  p.y_raw = bayer_pack(clean);
  p.y_rgb = simple_isp(p.y_raw);
  return p;
}

std::vector<SamplePair> make_dataset(const SynthConfig& cfg, std::size_t count) {
  std::vector<SamplePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_sample(cfg, i));
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SamplePair>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json manifest = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "sample_%04zu", i);
    const std::string x = std::string(stem) + "_x.fraw";
    const std::string yr = std::string(stem) + "_y_raw.fraw";
    const std::string yc = std::string(stem) + "_y_rgb.fraw";
    const auto& s = samples[i];
    write_raw_tensor(dir / x, s.x, {"RGGB", s.ratio});
    write_raw_tensor(dir / yr, s.y_raw, {"RGGB", std::nullopt});
    write_raw_tensor(dir / yc, s.y_rgb, {"RGGB", std::nullopt});
    manifest.push_back({{"x", x}, {"y_raw", yr}, {"y_rgb", yc}, {"ratio", s.ratio}});
  }
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
}

std::vector<SamplePair> read_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError("manifest.json is not valid JSON: " + std::string(e.what()));
  }
  if (!manifest.is_array()) throw FormatError("manifest.json must be a JSON array");
  std::vector<SamplePair> out;
  for (const auto& entry : manifest) {
    SamplePair p;
    try {
      p.x = read_raw_tensor(dir / entry.at("x").get<std::string>()).tensor;
      p.y_raw = read_raw_tensor(dir / entry.at("y_raw").get<std::string>()).tensor;
      p.y_rgb = read_raw_tensor(dir / entry.at("y_rgb").get<std::string>()).tensor;
      p.ratio = entry.at("ratio").get<float>();
    } catch (const json::exception& e) {
      throw FormatError("manifest entry malformed: " + std::string(e.what()));
    }
    if (p.x.shape() != p.y_raw.shape() || p.x.rank() != 3 || p.y_rgb.rank() != 3 ||
        p.y_rgb.dim(1) != 2 * p.x.dim(1) || p.y_rgb.dim(2) != 2 * p.x.dim(2)) {
      throw FormatError("manifest entry " + entry.at("x").get<std::string>() +
                        " has inconsistent shapes");
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fdanet::raw
