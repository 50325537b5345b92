#include "fdanet/analysis/flops.hpp"

#include <cstdio>

#include "json.hpp"

namespace fdanet::analysis {

using lineformer::AttentionStrategy;
using lineformer::FdaKind;

std::uint64_t conv_macs(std::int64_t n, std::int64_t cin, std::int64_t cout, std::int64_t ho,
                        std::int64_t wo, std::int64_t kh, std::int64_t kw, std::int64_t groups) {
  return static_cast<std::uint64_t>(n * cout * ho * wo * (cin / groups) * kh * kw);
}

namespace {

std::uint64_t cid_macs(std::int64_t n, std::int64_t c, std::int64_t e, std::int64_t h, std::int64_t w) {
  return conv_macs(n, c, c, h, w, 7, 7, c) + conv_macs(n, c, e * c, h, w, 1, 1) +
         conv_macs(n, e * c, c, h, w, 1, 1);
}

std::uint64_t channel_core_macs(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  return static_cast<std::uint64_t>(2 * n * c * c * h * w);
}

std::uint64_t pw_dw3(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  return conv_macs(n, c, c, h, w, 1, 1) + conv_macs(n, c, c, h, w, 3, 3, c);
}

template <typename T>
std::uint64_t fda_macs(const lineformer::FdaParams<T>& f, std::int64_t n, std::int64_t h,
                       std::int64_t w, AttentionStrategy strategy) {
  const std::int64_t c = f.channels;
  const auto norm = static_cast<std::uint64_t>(2 * n * c * h * w);
  std::uint64_t total = norm;  // layer norm
  switch (f.kind) {
    case FdaKind::lineformer:
      total += 3 * pw_dw3(n, c, h, w) + lineformer::line_attention_macs(strategy, n, c, h, w, f.local_height);
      break;
    case FdaKind::channel_attention:
      total += 3 * pw_dw3(n, c, h, w) + channel_core_macs(n, c, h, w);
      break;
    case FdaKind::conv:
      total += pw_dw3(n, c, h, w) + conv_macs(n, c, c, h, w, 7, 7, c);
      break;
  }
  total += norm;  // group norm
  total += 2 * conv_macs(n, c, c, h, w, 1, 1) + conv_macs(n, c, c, h, w, 3, 3, c);
  return total;
}

}  // namespace

std::uint64_t FlopsReport::train_macs() const {
  std::uint64_t s = 0;
  for (const auto& b : blocks)
    if (b.in_train) s += b.macs;
  return s;
}

std::uint64_t FlopsReport::infer_macs() const {
  std::uint64_t s = 0;
  for (const auto& b : blocks)
    if (b.in_infer) s += b.macs;
  return s;
}

std::int64_t FlopsReport::total_params() const {
  std::int64_t s = 0;
  for (const auto& b : blocks) s += b.params;
  return s;
}

std::int64_t FlopsReport::infer_params() const {
  std::int64_t s = 0;
  for (const auto& b : blocks)
    if (b.in_infer) s += b.params;
  return s;
}

std::uint64_t FlopsReport::macs_with_prefix(const std::string& prefix) const {
  std::uint64_t s = 0;
  for (const auto& b : blocks)
    if (b.name.rfind(prefix, 0) == 0) s += b.macs;
  return s;
}

std::int64_t FlopsReport::params_with_prefix(const std::string& prefix) const {
  std::int64_t s = 0;
  for (const auto& b : blocks)
    if (b.name.rfind(prefix, 0) == 0) s += b.params;
  return s;
}

std::string FlopsReport::to_json() const {
  nlohmann::json j;
  j["unit"] = "MAC";
  j["input_shape"] = input_shape;
  j["strategy"] = lineformer::to_string(strategy);
  j["train_macs"] = train_macs();
  j["infer_macs"] = infer_macs();
  j["infer_over_train"] =
      train_macs() ? static_cast<double>(infer_macs()) / static_cast<double>(train_macs()) : 0.0;
  j["total_params"] = total_params();
  j["infer_params"] = infer_params();
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : blocks) {
    j["blocks"].push_back({{"name", b.name},
                           {"macs", b.macs},
                           {"params", b.params},
                           {"train", b.in_train},
                           {"infer", b.in_infer}});
  }
  return j.dump(2);
}

std::string FlopsReport::to_table() const {
  std::string out = "FLOPs counted as multiply-accumulates (1 MAC = 1 FLOP)\ninput " +
                    shape_str(input_shape) + ", attention " + lineformer::to_string(strategy) + "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-32s %16s %10s %6s %6s\n", "block", "MACs", "params", "train",
                "infer");
  out += line;
  for (const auto& b : blocks) {
    std::snprintf(line, sizeof line, "%-32s %16llu %10lld %6s %6s\n", b.name.c_str(),
                  static_cast<unsigned long long>(b.macs), static_cast<long long>(b.params),
                  b.in_train ? "yes" : "-", b.in_infer ? "yes" : "-");
    out += line;
  }
  std::snprintf(line, sizeof line, "train total %llu MACs, inference total %llu MACs (ratio %.4f)\n",
                static_cast<unsigned long long>(train_macs()),
                static_cast<unsigned long long>(infer_macs()),
                train_macs() ? static_cast<double>(infer_macs()) / static_cast<double>(train_macs()) : 0.0);
  out += line;
  std::snprintf(line, sizeof line, "parameters %lld (inference graph %lld)\n",
                static_cast<long long>(total_params()), static_cast<long long>(infer_params()));
  out += line;
  return out;
}

template <typename T>
FlopsReport count_flops(const model::Model<T>& m, const Shape& input_shape, AttentionStrategy strategy) {
  const auto& cfg = m.config();
  cfg.validate_input(input_shape);
  FlopsReport r;
  r.input_shape = input_shape;
  r.strategy = strategy;
  const std::int64_t n = input_shape[0], H = input_shape[2], W = input_shape[3];
  const std::int64_t e = cfg.cid_expansion;
  const int scales = cfg.num_scales;
  const bool raw_train = cfg.use_raw_supervision;
  const auto& ps = m.params();
  auto block = [&](const std::string& name, std::uint64_t macs, bool train, bool infer) {
    r.blocks.push_back({name, macs, ps.count(name + "."), train, infer});
  };
  auto hs = [&](int s) { return H >> s; };
  auto ws = [&](int s) { return W >> s; };

  const std::string enc = model::kEncoderPrefix;
  block(enc + "intro", conv_macs(n, 4, cfg.channels_at(0), H, W, 3, 3), true, true);
  for (int s = 0; s < scales; ++s) {
    const auto c = cfg.channels_at(s);
    const std::string p = enc + "s" + std::to_string(s);
    for (int b = 0; b < cfg.cid_blocks_per_scale; ++b) {
      block(p + ".cid" + std::to_string(b), cid_macs(n, c, e, hs(s), ws(s)), true, true);
    }
    if (s + 1 < scales) block(p + ".down", conv_macs(n, c, 2 * c, hs(s + 1), ws(s + 1), 2, 2), true, true);
  }

  if (cfg.use_fda) {
    for (int s = 0; s < scales; ++s) {
      const auto& f = m.fda()[static_cast<std::size_t>(s)];
      block(std::string(model::kFdaPrefix) + "s" + std::to_string(s),
            fda_macs(f, n, hs(s), ws(s), strategy), true, true);
    }
  }

  const std::string rgb = model::kRgbDecoderPrefix;
  for (int s = scales - 1; s >= 0; --s) {
    const auto c = cfg.channels_at(s);
    const std::string p = rgb + "s" + std::to_string(s);
    if (s + 1 < scales) block(p + ".up", conv_macs(n, 2 * c, 4 * c, hs(s + 1), ws(s + 1), 1, 1), true, true);
    block(p + ".attn",
          3 * pw_dw3(n, c, hs(s), ws(s)) + channel_core_macs(n, c, hs(s), ws(s)) +
              conv_macs(n, c, c, hs(s), ws(s), 1, 1),
          true, true);
    block(p + ".cid", cid_macs(n, c, e, hs(s), ws(s)), true, true);
  }
  block(rgb + "head", conv_macs(n, cfg.channels_at(0), 12, H, W, 1, 1), true, true);

  const std::string raw = model::kRawDecoderPrefix;
  for (int s = scales - 1; s >= 0; --s) {
    const auto c = cfg.channels_at(s);
    const std::string p = raw + "s" + std::to_string(s);
    if (s + 1 < scales) {
      block(p + ".up", conv_macs(n, 2 * c, 4 * c, hs(s + 1), ws(s + 1), 1, 1), raw_train, false);
      block(p + ".fuse", conv_macs(n, 2 * c, c, hs(s), ws(s), 1, 1), raw_train, false);
    }
    for (int b = 0; b < cfg.cid_blocks_per_scale; ++b) {
      block(p + ".cid" + std::to_string(b), cid_macs(n, c, e, hs(s), ws(s)), raw_train, false);
    }
  }
  block(raw + "head", conv_macs(n, cfg.channels_at(0), 4, H, W, 1, 1), raw_train, false);
  return r;
}

template FlopsReport count_flops(const model::Model<float>&, const Shape&, AttentionStrategy);
template FlopsReport count_flops(const model::Model<double>&, const Shape&, AttentionStrategy);

}  // namespace fdanet::analysis
