#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "fdanet/analysis/bench.hpp"
#include "fdanet/analysis/flops.hpp"
#include "fdanet/model/fdanet.hpp"
#include "fdanet/raw/dataset.hpp"
#include "fdanet/raw/isp.hpp"
#include "fdanet/raw/raw_io.hpp"
#include "fdanet/train/metrics.hpp"
#include "fdanet/train/trainer.hpp"
#include "fdanet/verify/checks.hpp"
#include "json.hpp"

namespace fdanet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int& exit_status() {
  static int status = kOk;
  return status;
}

std::vector<long long> parse_dims(const std::string& s) {
  std::vector<long long> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse dimensions '" + s + "' (expected e.g. 160x160)");
    }
  }
  if (out.empty()) throw ConfigError("cannot parse dimensions '" + s + "'");
  return out;
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

Tensor<float> as_batch(const Tensor<float>& t) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) {
    Shape s = t.shape();
    s.insert(s.begin(), 1);
    return Tensor<float>::from_data(s, {t.data().begin(), t.data().end()});
  }
  throw DimensionError("expected a [4,H,W] or [1,4,H,W] tensor, got " + shape_str(t.shape()));
}

Tensor<float> drop_batch(const Tensor<float>& t) {
  Shape s = t.shape();
  s.erase(s.begin());
  return Tensor<float>::from_data(s, {t.data().begin(), t.data().end()});
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t count = 32;
  std::string size = "160x160";
  std::uint64_t seed = 0;
  std::vector<float> ratios = {50.0f, 100.0f, 250.0f};
};

void run_synth(const SynthArgs& a) {
  raw::SynthConfig cfg;
  const auto dims = parse_dims(a.size);
  if (dims.size() != 2) throw ConfigError("--size expects HxW");
  cfg.height = dims[0];
  cfg.width = dims[1];
  cfg.seed = a.seed;
  cfg.ratios = a.ratios;
  std::printf("synth: %zu samples of %lldx%lld, seed %llu -> %s\n", a.count,
              static_cast<long long>(cfg.height), static_cast<long long>(cfg.width),
              static_cast<unsigned long long>(cfg.seed), a.out.c_str());
  raw::write_dataset(a.out, raw::make_dataset(cfg, a.count));
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, resume;
  std::int64_t steps = 0, eval_every = 0, crop = 0, batch_size = 0;
  double lr = 0;
  std::uint64_t seed = 0, model_seed = 0;
  bool tiny = false, no_raw = false, no_fda = false, json_out = false;
  std::string fda_kind, strategy;
};

void run_train(const TrainArgs& a, const CLI::App& cmd) {
  model::ModelConfig mc = a.tiny ? model::ModelConfig::tiny() : model::ModelConfig{};
  train::TrainConfig tc;
  std::uint64_t model_seed = 0;
  if (!a.config.empty()) {
    json j;
    try {
      j = json::parse(read_text(a.config));
    } catch (const json::exception& e) {
      throw ConfigError(a.config + " is not valid JSON: " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "model") mc = model::ModelConfig::from_json(it.value().dump(), mc);
      else if (it.key() == "train") tc = train::TrainConfig::from_json(it.value().dump(), tc);
      else if (it.key() == "model_seed") model_seed = it.value().get<std::uint64_t>();
      else throw ConfigError("unknown top-level config key '" + it.key() + "' (model|train|model_seed)");
    }
  }
  if (cmd.count("--steps")) tc.steps = a.steps;
  if (cmd.count("--eval-every")) tc.eval_every = a.eval_every;
  if (cmd.count("--crop")) tc.crop = a.crop;
  if (cmd.count("--batch-size")) tc.batch_size = a.batch_size;
  if (cmd.count("--lr")) tc.optim.lr = a.lr;
  if (cmd.count("--seed")) tc.seed = a.seed;
  if (cmd.count("--strategy")) tc.strategy = lineformer::attention_strategy_from_string(a.strategy);
  if (cmd.count("--model-seed")) model_seed = a.model_seed;
  if (a.no_raw) mc.use_raw_supervision = false;
  if (a.no_fda) mc.use_fda = false;
  if (cmd.count("--fda-kind")) mc.fda_kind = lineformer::fda_kind_from_string(a.fda_kind);
  mc.validate();
  tc.validate();

  json effective = {{"model", json::parse(mc.to_json())},
                    {"train", json::parse(tc.to_json())},
                    {"model_seed", model_seed}};
  std::printf("effective config: %s\n", effective.dump().c_str());
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  write_text(fs::path(a.out) / "config.json", effective.dump(2) + "\n");

  auto data = raw::read_dataset(a.data);
  auto m = model::Model<float>::build(mc, model_seed);
  std::printf("model: %lld parameters, %zu samples\n", static_cast<long long>(m.parameter_count()),
              data.size());
  train::Trainer trainer(m, std::move(data), tc);
  if (!a.resume.empty()) {
    trainer.resume(fs::path(a.resume));
    std::printf("resumed at step %lld\n", static_cast<long long>(trainer.completed_steps()));
  }
  const bool quiet = a.json_out;
  const std::int64_t every = std::max<std::int64_t>(1, tc.eval_every > 0 ? tc.eval_every : 50);
  trainer.run(fs::path(a.out), [&](const train::MetricsRow& r) {
    if (!quiet && (r.step % every == 0 || r.step == tc.steps)) {
      std::printf("%s\n", train::metrics_csv_line(r).c_str());
      std::fflush(stdout);
    }
  });
  trainer.write_csv(fs::path(a.out) / "metrics.csv");
  if (a.json_out) {
    const auto& log = trainer.log();
    json j = {{"steps", trainer.completed_steps()},
              {"final_loss", log.empty() ? 0.0 : log.back().loss_total},
              {"checkpoint", (fs::path(a.out) / "last.fdat").string()}};
    std::printf("%s\n", j.dump().c_str());
  }
}

// ---- infer -----------------------------------------------------------------

struct InferArgs {
  std::string ckpt, input, out, target, strategy = "linear";
  bool streaming = false, json_out = false;
};

void run_infer(const InferArgs& a) {
  if (!fs::exists(a.ckpt)) throw FormatError("checkpoint " + a.ckpt + " does not exist");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  auto m = model::Model<float>::build(model::checkpoint_config(ckpt), 0);
  model::load_into(m, ckpt);
  auto strategy = lineformer::attention_strategy_from_string(a.strategy);
  if (a.streaming) strategy = lineformer::AttentionStrategy::streaming;
  const auto in = raw::read_raw_tensor(a.input);
  const auto x = as_batch(in.tensor);
  if (x.dim(1) != 4) throw DimensionError("input must carry 4 packed channels, got " + shape_str(x.shape()));
  if (!a.json_out) {
    std::printf("infer: %s on %s, attention %s\n", a.ckpt.c_str(), shape_str(x.shape()).c_str(),
                lineformer::to_string(strategy));
  }
  Tensor<float> y;
  {
    NoGradGuard guard;
    y = drop_batch(m.forward_infer(x, {strategy, false, false}));
  }
  fs::path out(a.out);
  const fs::path fraw = fs::path(out).replace_extension(".fraw");
  const fs::path ppm = fs::path(out).replace_extension(".ppm");
  raw::write_raw_tensor(fraw, y, {"RGGB", in.info.ratio});
  raw::write_ppm(ppm, y);
  json j = {{"output", fraw.string()}, {"preview", ppm.string()}, {"strategy", lineformer::to_string(strategy)}};
  if (!a.target.empty()) {
    const auto target = raw::read_raw_tensor(a.target).tensor;
    j["psnr"] = train::psnr(y, target, 1.0);
    j["baseline_psnr"] = train::psnr(raw::simple_isp(drop_batch(x)), target, 1.0);
  }
  std::printf("%s\n", a.json_out ? j.dump().c_str() : j.dump(2).c_str());
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string impl = "all", grid, csv;
  std::int64_t channels = 16;
  int local_height = 7, repeats = 5;
  bool json_out = false;
};

std::vector<std::pair<std::int64_t, std::int64_t>> default_grid(lineformer::AttentionStrategy s) {
  if (s == lineformer::AttentionStrategy::naive) return {{8, 8}, {12, 12}, {16, 16}, {24, 24}, {32, 32}};
  return {{16, 64}, {16, 128}, {16, 256}, {16, 512}, {16, 1024}};
}

void run_bench(const BenchArgs& a, const CLI::App& cmd) {
  std::vector<lineformer::AttentionStrategy> impls;
  if (a.impl == "all") {
    impls = {lineformer::AttentionStrategy::naive, lineformer::AttentionStrategy::linear,
             lineformer::AttentionStrategy::streaming};
  } else {
    impls = {lineformer::attention_strategy_from_string(a.impl)};
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> grid;
  if (!a.grid.empty()) {
    std::stringstream ss(a.grid);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto d = parse_dims(item);
      if (d.size() != 2) throw ConfigError("--grid entries must be HxW");
      grid.emplace_back(d[0], d[1]);
    }
  }
  std::string csv = std::string(analysis::kBenchCsvHeader) + "\n";
  json j = json::array();
  for (auto impl : impls) {
    analysis::BenchSpec spec;
    spec.impl = impl;
    spec.grid = grid.empty() ? default_grid(impl) : grid;
    spec.channels = a.channels;
    spec.repeats = a.repeats;
    // The naive sweep uses the full-height window unless told otherwise.
    spec.local_height = (impl == lineformer::AttentionStrategy::naive && !cmd.count("--local-height"))
                            ? 0
                            : a.local_height;
    const auto points = analysis::bench_scaling(spec);
    for (const auto& p : points) csv += analysis::bench_csv_line(p) + "\n";
    const double slope = analysis::pixel_slope(points);
    j.push_back({{"impl", lineformer::to_string(impl)}, {"slope_vs_pixels", slope}, {"points", points.size()}});
    if (!a.json_out) {
      std::printf("%s: log-log slope of median time vs pixel count = %.3f\n", lineformer::to_string(impl),
                  slope);
    }
  }
  if (!a.csv.empty()) write_text(a.csv, csv);
  if (a.json_out) std::printf("%s\n", j.dump().c_str());
  else std::printf("%s", csv.c_str());
}

// ---- flops -----------------------------------------------------------------

struct FlopsArgs {
  std::string model_config, input = "1x4x256x256", strategy = "linear";
  bool tiny = false, json_out = false;
};

void run_flops(const FlopsArgs& a) {
  model::ModelConfig mc = a.tiny ? model::ModelConfig::tiny() : model::ModelConfig{};
  if (!a.model_config.empty()) mc = model::ModelConfig::from_json(read_text(a.model_config), mc);
  const auto dims = parse_dims(a.input);
  if (dims.size() != 4) throw ConfigError("--input expects NxCxHxW");
  const Shape shape(dims.begin(), dims.end());
  const auto m = model::Model<float>::build(mc, 0);
  const auto rep = analysis::count_flops(m, shape, lineformer::attention_strategy_from_string(a.strategy));
  if (a.json_out) {
    std::printf("%s\n", rep.to_json().c_str());
    return;
  }
  std::printf("model config: %s\n%s", mc.to_json().c_str(), rep.to_table().c_str());
  const auto raw_share = rep.macs_with_prefix(model::kRawDecoderPrefix);
  std::printf("raw decoder share of train MACs: %.4f\n",
              rep.train_macs() ? static_cast<double>(mc.use_raw_supervision ? raw_share : 0) /
                                     static_cast<double>(rep.train_macs())
                               : 0.0);
}

}  // namespace

void register_synth(CLI::App& app) {
  auto a = std::make_shared<SynthArgs>();
  auto* cmd = app.add_subcommand("synth", "Write a synthetic raw/sRGB training set");
  cmd->add_option("--out", a->out, "Output directory")->required();
  cmd->add_option("--count", a->count, "Number of samples")->capture_default_str();
  cmd->add_option("--size", a->size, "Mosaic size HxW (even)")->capture_default_str();
  cmd->add_option("--seed", a->seed, "Seed")->capture_default_str();
  cmd->add_option("--ratios", a->ratios, "Amplification ratios to draw from");
  cmd->callback([a] { run_synth(*a); });
}

void register_train(CLI::App& app) {
  auto a = std::make_shared<TrainArgs>();
  auto* cmd = app.add_subcommand("train", "Train on a synthetic set (flags > config file > defaults)");
  cmd->add_option("--data", a->data, "Dataset directory")->required();
  cmd->add_option("--out", a->out, "Output directory for checkpoints and metrics.csv")->required();
  cmd->add_option("--config", a->config, "JSON file with {\"model\":{...},\"train\":{...}}");
  cmd->add_option("--resume", a->resume, "Checkpoint written by a previous train run");
  cmd->add_option("--steps", a->steps, "Optimizer steps");
  cmd->add_option("--eval-every", a->eval_every, "Evaluation and checkpoint period (0 = off)");
  cmd->add_option("--crop", a->crop, "Packed crop side");
  cmd->add_option("--batch-size", a->batch_size, "Batch size");
  cmd->add_option("--lr", a->lr, "Learning rate");
  cmd->add_option("--seed", a->seed, "Data order and crop seed");
  cmd->add_option("--model-seed", a->model_seed, "Weight init seed");
  cmd->add_option("--strategy", a->strategy, "Attention strategy: naive|linear|streaming");
  cmd->add_option("--fda-kind", a->fda_kind, "lineformer|channel_attention|conv");
  cmd->add_flag("--tiny", a->tiny, "Start from the tiny model config");
  cmd->add_flag("--no-raw-supervision", a->no_raw, "Drop the raw loss term");
  cmd->add_flag("--no-fda", a->no_fda, "Remove the adaptation modules");
  cmd->add_flag("--json", a->json_out, "Machine-readable summary");
  cmd->callback([a, cmd] { run_train(*a, *cmd); });
}

void register_infer(CLI::App& app) {
  auto a = std::make_shared<InferArgs>();
  auto* cmd = app.add_subcommand("infer", "Enhance one packed raw tensor (sRGB graph only)");
  cmd->add_option("--ckpt", a->ckpt, "Checkpoint")->required();
  cmd->add_option("--input", a->input, "Packed raw input (.fraw)")->required();
  cmd->add_option("--out", a->out, "Output path; writes <out>.fraw and <out>.ppm")->required();
  cmd->add_option("--target", a->target, "Reference sRGB (.fraw) for PSNR");
  cmd->add_option("--strategy", a->strategy, "naive|linear|streaming")->capture_default_str();
  cmd->add_flag("--streaming", a->streaming, "Use the line-buffer executor");
  cmd->add_flag("--json", a->json_out, "Single-line JSON output");
  cmd->callback([a] { run_infer(*a); });
}

void register_check(CLI::App& app) {
  auto level = std::make_shared<std::string>("quick");
  auto json_out = std::make_shared<bool>(false);
  auto* cmd = app.add_subcommand("check", "Run the built-in property and oracle suites");
  cmd->add_option("--level", *level, "quick|full")->capture_default_str();
  cmd->add_flag("--json", *json_out, "JSON report");
  cmd->callback([level, json_out] {
    const auto rep = verify::run_checks(verify::check_level_from_string(*level));
    std::printf("%s", *json_out ? (rep.to_json() + "\n").c_str() : rep.to_text().c_str());
    if (!rep.all_passed()) exit_status() = kVerifyFailed;
  });
}

void register_bench(CLI::App& app) {
  auto a = std::make_shared<BenchArgs>();
  auto* cmd = app.add_subcommand("bench", "Time attention strategies over a shape grid");
  cmd->add_option("--impl", a->impl, "naive|linear|streaming|all")->capture_default_str();
  cmd->add_option("--grid", a->grid, "Comma-separated HxW list");
  cmd->add_option("--channels", a->channels, "Channels")->capture_default_str();
  cmd->add_option("--local-height", a->local_height, "h (0 = full height)")->capture_default_str();
  cmd->add_option("--repeats", a->repeats, "Timed repeats per point (>= 5)")->capture_default_str();
  cmd->add_option("--csv", a->csv, "Also write the CSV here");
  cmd->add_flag("--json", a->json_out, "JSON summary");
  cmd->callback([a, cmd] { run_bench(*a, *cmd); });
}

void register_flops(CLI::App& app) {
  auto a = std::make_shared<FlopsArgs>();
  auto* cmd = app.add_subcommand("flops", "Analytic MAC and parameter counts");
  cmd->add_option("--model-config", a->model_config, "Model config JSON file");
  cmd->add_option("--input", a->input, "Input shape NxCxHxW")->capture_default_str();
  cmd->add_option("--strategy", a->strategy, "naive|linear|streaming")->capture_default_str();
  cmd->add_flag("--tiny", a->tiny, "Start from the tiny model config");
  cmd->add_flag("--json", a->json_out, "JSON report");
  cmd->callback([a] { run_flops(*a); });
}

}  // namespace fdanet::cli
