#include "fdanet/raw/raw_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fdanet/checkpoint.hpp"
#include "json.hpp"

namespace fdanet::raw {

using nlohmann::json;

void write_raw_tensor(const std::filesystem::path& path, const Tensor<float>& t,
                      const RawTensorInfo& info) {
  json header = {{"shape", t.shape()}, {"dtype", "f32"}, {"pattern", info.pattern}};
  header["ratio"] = info.ratio ? json(*info.ratio) : json(nullptr);
  write_framed(path, {kRawTensorMagic, header.dump(), {t.data().begin(), t.data().end()}});
}

RawTensorFile read_raw_tensor(const std::filesystem::path& path) {
  FramedFile file = read_framed(path, kRawTensorMagic);
  RawTensorFile out;
  Shape shape;
  try {
    const json header = json::parse(file.header_json);
    shape = header.at("shape").get<Shape>();
    if (header.value("dtype", "f32") != "f32") {
      throw FormatError(path.string() + ": only f32 raw tensors are supported");
    }
    out.info.pattern = header.value("pattern", "RGGB");
    if (header.contains("ratio") && !header["ratio"].is_null()) {
      out.info.ratio = header["ratio"].get<float>();
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed header at byte offset 13: " + e.what());
  }
  cfa_pattern_from_string(out.info.pattern);
  const std::size_t payload_start = 13 + file.header_json.size();
  for (auto e : shape) {
    if (e <= 0) throw FormatError(path.string() + ": non-positive extent in header shape");
  }
  const auto expected = static_cast<std::size_t>(shape_numel(shape));
  if (file.payload.size() != expected) {
    throw FormatError(path.string() + ": payload holds " + std::to_string(file.payload.size()) +
                      " values, header shape needs " + std::to_string(expected) +
                      " (payload ends at byte offset " +
                      std::to_string(payload_start + 4 * file.payload.size()) + ")");
  }
  out.tensor = Tensor<float>::from_data(std::move(shape), std::move(file.payload));
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb) {
  Shape s = rgb.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || s[0] != 3) {
    throw DimensionError("write_ppm expects [3,H,W] or [1,3,H,W], got " + shape_str(rgb.shape()));
  }
  const std::int64_t h = s[1], w = s[2];
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  const auto d = rgb.data();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(d[static_cast<std::size_t>((c * h + y) * w + x)], 0.0f, 1.0f);
        bytes[static_cast<std::size_t>((y * w + x) * 3 + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  std::int64_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(path.string() + ": not an 8-bit P6 PPM");
  }
  is.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * h * w));
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  std::vector<float> out(bytes.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        out[static_cast<std::size_t>((c * h + y) * w + x)] =
            bytes[static_cast<std::size_t>((y * w + x) * 3 + c)] / 255.0f;
  return Tensor<float>::from_data({3, h, w}, std::move(out));
}

}  // namespace fdanet::raw
