#include "fdanet/model/config.hpp"

#include "json.hpp"

namespace fdanet::model {

using nlohmann::json;

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.num_scales = 2;
  c.base_channels = 8;
  c.cid_blocks_per_scale = 1;
  c.local_height = {3, 3};
  c.groupnorm_groups = 4;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("model config field '" + field + "': " + why);
  };
  if (num_scales < 1 || num_scales > 8) fail("num_scales", "must be in [1, 8]");
  if (base_channels < 2 || base_channels % 2 != 0) fail("base_channels", "must be even and >= 2");
  if (cid_blocks_per_scale < 0) fail("cid_blocks_per_scale", "must be >= 0");
  if (cid_expansion < 1) fail("cid_expansion", "must be >= 1");
  if (groupnorm_groups < 1 || base_channels % groupnorm_groups != 0) {
    fail("groupnorm_groups", "must divide base_channels (" + std::to_string(base_channels) + ")");
  }
  if (static_cast<int>(local_height.size()) != num_scales) {
    fail("local_height", "needs one entry per scale (" + std::to_string(num_scales) + ")");
  }
  for (int h : local_height) {
    if (h < 1 || h % 2 == 0) fail("local_height", "entries must be positive odd integers");
  }
}

void ModelConfig::validate_input(const Shape& s) const {
  if (s.size() != 4 || s[1] != 4) {
    throw DimensionError("network input must be packed raw [N,4,H,W], got " + shape_str(s));
  }
  const auto m = spatial_multiple();
  if (s[2] % m != 0 || s[3] % m != 0) {
    throw DimensionError("network input spatial axes 2,3 of " + shape_str(s) +
                         " must be divisible by 2^(num_scales-1) = " + std::to_string(m));
  }
}

std::string ModelConfig::to_json() const {
  json j = {{"num_scales", num_scales},
            {"base_channels", base_channels},
            {"cid_blocks_per_scale", cid_blocks_per_scale},
            {"local_height", local_height},
            {"groupnorm_groups", groupnorm_groups},
            {"cid_expansion", cid_expansion},
            {"use_fda", use_fda},
            {"use_raw_supervision", use_raw_supervision},
            {"fda_kind", lineformer::to_string(fda_kind)}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text, const ModelConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c = base;
  bool scales_given = false;
  bool heights_given = false;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "num_scales") {
        c.num_scales = v.get<int>();
        scales_given = true;
      } else if (key == "base_channels") {
        c.base_channels = v.get<int>();
      } else if (key == "cid_blocks_per_scale") {
        c.cid_blocks_per_scale = v.get<int>();
      } else if (key == "local_height") {
        heights_given = true;
        if (v.is_array()) c.local_height = v.get<std::vector<int>>();
        else c.local_height = {v.get<int>()};
      } else if (key == "groupnorm_groups") {
        c.groupnorm_groups = v.get<int>();
      } else if (key == "cid_expansion") {
        c.cid_expansion = v.get<int>();
      } else if (key == "use_fda") {
        c.use_fda = v.get<bool>();
      } else if (key == "use_raw_supervision") {
        c.use_raw_supervision = v.get<bool>();
      } else if (key == "fda_kind") {
        c.fda_kind = lineformer::fda_kind_from_string(v.get<std::string>());
      } else {
        throw ConfigError("unknown model config field '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("model config field '" + key + "': " + e.what());
    }
  }
  // A scalar h, or a changed scale count without explicit heights, broadcasts.
  if (c.local_height.size() == 1 && c.num_scales != 1) {
    c.local_height.assign(static_cast<std::size_t>(c.num_scales), c.local_height.front());
  } else if (scales_given && !heights_given && !c.local_height.empty() &&
             static_cast<int>(c.local_height.size()) != c.num_scales) {
    c.local_height.assign(static_cast<std::size_t>(c.num_scales), c.local_height.front());
  }
  c.validate();
  return c;
}

}  // namespace fdanet::model
