#include "fdanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fdanet {

namespace {

using nlohmann::json;

constexpr std::size_t kMagicLen = 5;

void put_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

void write_framed(const std::filesystem::path& path, const FramedFile& file) {
  if (file.magic.size() != kMagicLen) throw UsageError("magic must be 5 bytes: " + file.magic);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(file.magic.data(), static_cast<std::streamsize>(kMagicLen));
  put_u64_le(os, file.header_json.size());
  os.write(file.header_json.data(), static_cast<std::streamsize>(file.header_json.size()));
  std::vector<std::uint32_t> words(file.payload.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = to_le(std::bit_cast<std::uint32_t>(file.payload[i]));
  }
  os.write(reinterpret_cast<const char*>(words.data()),
           static_cast<std::streamsize>(words.size() * 4));
  if (!os) throw IoError("write failed for " + path.string());
}

FramedFile read_framed(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, expected_magic) != 0) {
    throw FormatError(where + "bad magic at byte offset 0 (expected " + expected_magic + ")");
  }
  if (bytes.size() < kMagicLen + 8) {
    throw FormatError(where + "truncated header length at byte offset " +
                      std::to_string(kMagicLen));
  }
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) {
    header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[kMagicLen + i]))
                  << (8 * i);
  }
  const std::size_t header_start = kMagicLen + 8;
  if (header_len > bytes.size() - header_start) {
    throw FormatError(where + "header of " + std::to_string(header_len) +
                      " bytes overruns file at byte offset " + std::to_string(header_start));
  }
  FramedFile out;
  out.magic = expected_magic;
  out.header_json = bytes.substr(header_start, header_len);
  const std::size_t payload_start = header_start + header_len;
  const std::size_t payload_bytes = bytes.size() - payload_start;
  if (payload_bytes % 4 != 0) {
    throw FormatError(where + "payload is not a whole number of f32 values at byte offset " +
                      std::to_string(payload_start + payload_bytes - payload_bytes % 4));
  }
  out.payload.resize(payload_bytes / 4);
  for (std::size_t i = 0; i < out.payload.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + payload_start + 4 * i, 4);
    out.payload[i] = std::bit_cast<float>(to_le(w));
  }
  return out;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["format"] = kCheckpointMagic;
  header["dtype"] = "f32";
  header["tensors"] = json::array();
  FramedFile file{kCheckpointMagic, {}, {}};
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != static_cast<std::int64_t>(t.values.size())) {
      throw DimensionError("checkpoint tensor " + t.name + " does not fill " + shape_str(t.shape));
    }
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}});
    file.payload.insert(file.payload.end(), t.values.begin(), t.values.end());
  }
  header["metadata"] = json::parse(ckpt.metadata_json);
  file.header_json = header.dump();
  write_framed(path, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  FramedFile file = read_framed(path, kCheckpointMagic);
  const std::size_t payload_start = 5 + 8 + file.header_json.size();
  json header;
  try {
    header = json::parse(file.header_json);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": header JSON invalid at byte offset 13: " + e.what());
  }
  Checkpoint ckpt;
  try {
    if (header.value("dtype", "f32") != "f32") {
      throw FormatError(path.string() + ": only f32 payloads are supported");
    }
    ckpt.metadata_json = header.contains("metadata") ? header["metadata"].dump() : "{}";
    std::size_t offset = 0;
    for (const auto& entry : header.at("tensors")) {
      CheckpointTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto n = static_cast<std::size_t>(shape_numel(t.shape));
      if (offset + n > file.payload.size()) {
        throw FormatError(path.string() + ": tensor " + t.name + " truncated at byte offset " +
                          std::to_string(payload_start + 4 * file.payload.size()) +
                          " (needs " + std::to_string(payload_start + 4 * (offset + n)) + ")");
      }
      t.values.assign(file.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                      file.payload.begin() + static_cast<std::ptrdiff_t>(offset + n));
      offset += n;
      ckpt.tensors.push_back(std::move(t));
    }
    if (offset != file.payload.size()) {
      throw FormatError(path.string() + ": " + std::to_string(4 * (file.payload.size() - offset)) +
                        " trailing payload bytes at byte offset " +
                        std::to_string(payload_start + 4 * offset));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  return ckpt;
}

}  // namespace fdanet
