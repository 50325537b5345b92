#include "fdanet/train/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "fdanet/autodiff.hpp"
#include "fdanet/train/metrics.hpp"
#include "json.hpp"

namespace fdanet::train {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCropStream = 0x63726f70;
constexpr std::uint64_t kOrderStream = 0x6f726472;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// [C, H, W] window at (oy, ox) of side (sh, sw), appended to `out`.
void append_crop(const Tensor<float>& t, std::int64_t oy, std::int64_t ox, std::int64_t sh,
                 std::int64_t sw, std::vector<float>& out) {
  const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  const auto d = t.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < sh; ++y) {
      const auto row = d.begin() + static_cast<std::ptrdiff_t>((ch * h + oy + y) * w + ox);
      out.insert(out.end(), row, row + sw);
    }
}

}  // namespace

void TrainConfig::validate() const {
  optim.validate();
  if (steps < 0) throw ConfigError("train config field 'steps': must be >= 0");
  if (batch_size < 1) throw ConfigError("train config field 'batch_size': must be >= 1");
  if (eval_every < 0) throw ConfigError("train config field 'eval_every': must be >= 0");
  if (crop < 1) throw ConfigError("train config field 'crop': must be >= 1");
  if (eval_samples < 0) throw ConfigError("train config field 'eval_samples': must be >= 0");
  if (!(loss_weights.rgb >= 0) || !(loss_weights.raw >= 0)) {
    throw ConfigError("train config field 'loss_weights': weights must be >= 0");
  }
}

std::string TrainConfig::to_json() const {
  json j = {{"lr", optim.lr},
            {"beta1", optim.beta1},
            {"beta2", optim.beta2},
            {"eps", optim.eps},
            {"weight_decay", optim.weight_decay},
            {"steps", steps},
            {"batch_size", batch_size},
            {"eval_every", eval_every},
            {"crop", crop},
            {"eval_samples", eval_samples},
            {"seed", seed},
            {"loss_weights", {{"rgb", loss_weights.rgb}, {"raw", loss_weights.raw}}},
            {"strategy", lineformer::to_string(strategy)}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c = base;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "lr") c.optim.lr = v.get<double>();
      else if (key == "beta1") c.optim.beta1 = v.get<double>();
      else if (key == "beta2") c.optim.beta2 = v.get<double>();
      else if (key == "eps") c.optim.eps = v.get<double>();
      else if (key == "weight_decay") c.optim.weight_decay = v.get<double>();
      else if (key == "steps") c.steps = v.get<std::int64_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::int64_t>();
      else if (key == "eval_every") c.eval_every = v.get<std::int64_t>();
      else if (key == "crop") c.crop = v.get<std::int64_t>();
      else if (key == "eval_samples") c.eval_samples = v.get<std::int64_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "strategy") c.strategy = lineformer::attention_strategy_from_string(v.get<std::string>());
      else if (key == "loss_weights") {
        for (auto w = v.begin(); w != v.end(); ++w) {
          if (w.key() == "rgb") c.loss_weights.rgb = w.value().get<double>();
          else if (w.key() == "raw") c.loss_weights.raw = w.value().get<double>();
          else throw ConfigError("unknown train config field 'loss_weights." + w.key() + "'");
        }
      } else {
        throw ConfigError("unknown train config field '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("train config field '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::string s = std::to_string(r.step) + "," + fmt_double(r.loss_total) + "," +
                  fmt_double(r.loss_rgb) + ",";
  if (r.loss_raw) s += fmt_double(*r.loss_raw);
  s += ",";
  if (r.psnr) s += fmt_double(*r.psnr);
  return s;
}

Trainer::Trainer(model::Model<float>& model, std::vector<raw::SamplePair> data, TrainConfig cfg)
    : model_(model), data_(std::move(data)), cfg_(cfg), optim_(model.params(), cfg.optim) {
  cfg_.validate();
  if (data_.empty()) throw ConfigError("training needs a non-empty dataset");
  for (const auto& s : data_) {
    if (s.x.rank() != 3 || s.x.dim(0) != 4) {
      throw DimensionError("training sample x must be [4,H,W], got " + shape_str(s.x.shape()));
    }
    crop_side(s);
  }
}

std::int64_t Trainer::crop_side(const raw::SamplePair& s) const {
  const std::int64_t m = model_.config().spatial_multiple();
  std::int64_t c = std::min({cfg_.crop, s.x.dim(1), s.x.dim(2)});
  c -= c % m;
  if (c <= 0) {
    throw DimensionError("sample of packed size " + std::to_string(s.x.dim(1)) + "x" +
                         std::to_string(s.x.dim(2)) + " is smaller than the model's spatial multiple " +
                         std::to_string(m));
  }
  return c;
}

std::size_t Trainer::sample_for_draw(std::uint64_t draw) const {
  const std::uint64_t n = data_.size();
  const std::uint64_t epoch = draw / n;
  if (epoch != cached_epoch_) {
    cached_perm_.resize(n);
    std::iota(cached_perm_.begin(), cached_perm_.end(), std::size_t{0});
    std::mt19937_64 rng(raw::mix_seed(raw::mix_seed(cfg_.seed, kOrderStream), epoch));
    for (std::uint64_t i = n - 1; i > 0; --i) {
      std::swap(cached_perm_[i], cached_perm_[rng() % (i + 1)]);
    }
    cached_epoch_ = epoch;
  }
  return cached_perm_[draw % n];
}

Trainer::Batch Trainer::batch_at(std::int64_t step_index) const {
  std::vector<float> xs, yraw, yrgb;
  std::int64_t side = -1;
  for (std::int64_t b = 0; b < cfg_.batch_size; ++b) {
    const auto draw = static_cast<std::uint64_t>(step_index * cfg_.batch_size + b);
    const auto& s = data_[sample_for_draw(draw)];
    const std::int64_t c = crop_side(s);
    if (side >= 0 && c != side) {
      throw DimensionError("batch samples crop to different sizes; use equal-sized samples");
    }
    side = c;
    std::mt19937_64 rng(raw::mix_seed(raw::mix_seed(cfg_.seed, kCropStream), draw));
    const auto oy = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(s.x.dim(1) - c + 1));
    const auto ox = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(s.x.dim(2) - c + 1));
    append_crop(s.x, oy, ox, c, c, xs);
    append_crop(s.y_raw, oy, ox, c, c, yraw);
    append_crop(s.y_rgb, 2 * oy, 2 * ox, 2 * c, 2 * c, yrgb);
  }
  const std::int64_t n = cfg_.batch_size;
  return {Tensor<float>::from_data({n, 4, side, side}, std::move(xs)),
          Tensor<float>::from_data({n, 4, side, side}, std::move(yraw)),
          Tensor<float>::from_data({n, 3, 2 * side, 2 * side}, std::move(yrgb))};
}

MetricsRow Trainer::step() {
  const Batch batch = batch_at(step_);
  model_.params().zero_grad();
  const auto out = model_.forward_train(batch.x, {cfg_.strategy, false, false});
  const auto terms = combined_loss(out, batch.y_rgb, std::optional<Tensor<float>>(batch.y_raw),
                                   cfg_.loss_weights);
  backward(terms.total);
  optim_.step();
  ++step_;
  MetricsRow row;
  row.step = step_;
  row.loss_total = terms.total.item();
  row.loss_rgb = terms.rgb.item();
  if (terms.raw) row.loss_raw = terms.raw->item();
  if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) row.psnr = evaluate();
  log_.push_back(row);
  return row;
}

void Trainer::run(const std::optional<std::filesystem::path>& checkpoint_dir,
                  const std::function<void(const MetricsRow&)>& on_row) {
  if (checkpoint_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*checkpoint_dir, ec);
    if (ec) throw IoError("cannot create " + checkpoint_dir->string() + ": " + ec.message());
  }
  while (step_ < cfg_.steps) {
    const MetricsRow row = step();
    if (on_row) on_row(row);
    const bool periodic = cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0;
    if (checkpoint_dir && (periodic || step_ == cfg_.steps)) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06lld.fdat", static_cast<long long>(step_));
      save(*checkpoint_dir / name);
      save(*checkpoint_dir / "last.fdat");
    }
  }
}

double Trainer::evaluate() const {
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(cfg_.eval_samples), data_.size());
  if (count == 0) return 0.0;
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = data_[i];
    const std::int64_t m = model_.config().spatial_multiple();
    const std::int64_t h = s.x.dim(1) - s.x.dim(1) % m, w = s.x.dim(2) - s.x.dim(2) % m;
    std::vector<float> xs, ys;
    append_crop(s.x, 0, 0, h, w, xs);
    append_crop(s.y_rgb, 0, 0, 2 * h, 2 * w, ys);
    const auto x = Tensor<float>::from_data({1, 4, h, w}, std::move(xs));
    const auto y = Tensor<float>::from_data({1, 3, 2 * h, 2 * w}, std::move(ys));
    total += psnr(model_.forward_infer(x, {cfg_.strategy, false, false}), y, 1.0);
  }
  return total / static_cast<double>(count);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt = model::to_checkpoint(model_);
  json meta = json::parse(ckpt.metadata_json);
  meta["train"] = {{"step", step_},
                   {"optimizer_step", optim_.state().step},
                   {"config", json::parse(cfg_.to_json())}};
  ckpt.metadata_json = meta.dump();
  const auto& items = model_.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ckpt.tensors.push_back({"optim.m." + items[i].name, items[i].tensor.shape(), optim_.state().m[i]});
    ckpt.tensors.push_back({"optim.v." + items[i].name, items[i].tensor.shape(), optim_.state().v[i]});
  }
  return ckpt;
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, checkpoint()); }

void Trainer::resume(const Checkpoint& ckpt) {
  model::load_into(model_, ckpt);
  json meta;
  try {
    meta = json::parse(ckpt.metadata_json);
    const json& t = meta.at("train");
    step_ = t.at("step").get<std::int64_t>();
    optim_.state().step = t.at("optimizer_step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint carries no training state: ") + e.what());
  }
  const auto& items = model_.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const char* which : {"m", "v"}) {
      const std::string name = std::string("optim.") + which + "." + items[i].name;
      const CheckpointTensor* t = ckpt.find(name);
      if (!t) throw FormatError("checkpoint is missing tensor '" + name + "'");
      if (t->shape != items[i].tensor.shape()) {
        throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_str(t->shape) +
                             " but the model expects " + shape_str(items[i].tensor.shape()));
      }
      (which[0] == 'm' ? optim_.state().m : optim_.state().v)[i] = t->values;
    }
  }
  log_.clear();
}

void Trainer::resume(const std::filesystem::path& path) { resume(load_checkpoint(path)); }

void Trainer::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << kMetricsCsvHeader << "\n";
  for (const auto& r : log_) os << metrics_csv_line(r) << "\n";
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace fdanet::train
