#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "fdanet/autodiff.hpp"
#include "fdanet/raw/dataset.hpp"
#include "fdanet/train/adamw.hpp"
#include "fdanet/train/loss.hpp"
#include "fdanet/train/metrics.hpp"
#include "fdanet/train/trainer.hpp"
#include "oracles/random.hpp"

using namespace fdanet;
using namespace fdanet::train;

namespace {

std::vector<raw::SamplePair> small_set(std::size_t n) {
  raw::SynthConfig cfg;
  cfg.height = cfg.width = 32;
  cfg.seed = 3;
  return raw::make_dataset(cfg, n);
}

TrainConfig small_train(std::int64_t steps) {
  TrainConfig t;
  t.steps = steps;
  t.crop = 8;
  t.eval_every = 0;
  t.eval_samples = 2;
  t.optim.lr = 1e-3;
  t.seed = 11;
  return t;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("fdanet_test_train_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("perfect prediction gives zero") {
    const auto rgb = oracle::uniform<double>({1, 3, 4, 4}, 1), rw = oracle::uniform<double>({1, 4, 2, 2}, 2);
    model::NetworkOutputs<double> out{rgb, rw};
    const auto t = combined_loss(out, rgb, std::optional<Tensor<double>>(rw), {});
    CHECK(t.total.data()[0] == 0.0);
  }

  TEST_CASE("sRGB off by 0.1 everywhere gives 0.1") {
    const auto target = oracle::uniform<double>({1, 3, 4, 4}, 1);
    auto pred = target.detach();
    for (auto& v : pred.mutable_data()) v += 0.1;
    const auto t = combined_loss<double>(model::NetworkOutputs<double>{pred, std::nullopt}, target, std::nullopt, {});
    CHECK(t.total.data()[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK_FALSE(t.raw.has_value());
  }

  TEST_CASE("weights scale each term") {
    const auto target = Tensor<double>::zeros({1, 3, 2, 2});
    const auto pred = Tensor<double>::full({1, 3, 2, 2}, 0.2);
    const auto raw_pred = Tensor<double>::full({1, 4, 1, 1}, 0.5);
    const auto t = combined_loss<double>(model::NetworkOutputs<double>{pred, raw_pred}, target,
                                 std::optional<Tensor<double>>(Tensor<double>::zeros({1, 4, 1, 1})), {2.0, 0.5});
    CHECK(t.total.data()[0] == doctest::Approx(2.0 * 0.2 + 0.5 * 0.5));
    CHECK(t.rgb.data()[0] == doctest::Approx(0.2));
    CHECK(t.raw->data()[0] == doctest::Approx(0.5));
  }

  TEST_CASE("a raw prediction without a raw target is a usage error") {
    const auto rgb = Tensor<double>::zeros({1, 3, 2, 2});
    CHECK_THROWS_AS(combined_loss<double>(model::NetworkOutputs<double>{rgb, Tensor<double>::zeros({1, 4, 1, 1})}, rgb,
                                  std::nullopt, {}),
                    UsageError);
  }
}

TEST_SUITE("adamw") {
  TEST_CASE("zero gradients without decay leave parameters unchanged") {
    std::vector<double> p = {0.3, -0.7}, g = {0.0, 0.0}, m(2), v(2);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    for (int t = 1; t <= 5; ++t) adamw_update<double>(p, g, m, v, t, cfg);
    CHECK(p[0] == 0.3);
    CHECK(p[1] == -0.7);
  }

  TEST_CASE("one step on a scalar matches the hand formula") {
    std::vector<double> p = {0.5}, g = {0.2}, m = {0.0}, v = {0.0};
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    adamw_update<double>(p, g, m, v, 1, cfg);
    // 0.5 - 0.1*0.01*0.5 - 0.1 * 0.2 / (sqrt(0.04) + 1e-8)
    CHECK(std::abs(p[0] - 0.399500004999999975) < 1e-12);
    CHECK(std::abs(m[0] - 0.02) < 1e-15);
    CHECK(std::abs(v[0] - 0.0004) < 1e-15);
  }

  TEST_CASE("zero gradients with decay shrink exponentially") {
    std::vector<double> p = {2.0}, g = {0.0}, m = {0.0}, v = {0.0};
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.5;
    for (int t = 1; t <= 10; ++t) adamw_update<double>(p, g, m, v, t, cfg);
    CHECK(std::abs(p[0] - 2.0 * std::pow(1.0 - 0.005, 10)) < 1e-12);
  }

  TEST_CASE("non-finite gradients abort with the tensor name") {
    nn::ParamStore<float> ps;
    auto w = ps.add("layer.weight", Tensor<float>::full({2}, 1.0f));
    AdamW<float> opt(ps, {});
    const auto bad = Tensor<float>::from_data({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    backward(sum(mul(w, bad)));
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("layer.weight"), NumericError);
    CHECK(opt.state().step == 0);
  }

  TEST_CASE("parameters without gradients are skipped") {
    nn::ParamStore<float> ps;
    auto a = ps.add("a", Tensor<float>::full({1}, 1.0f));
    auto b = ps.add("b", Tensor<float>::full({1}, 1.0f));
    AdamW<float> opt(ps, {});
    backward(sum(a));
    opt.step();
    CHECK(a.data()[0] != 1.0f);
    CHECK(b.data()[0] == 1.0f);
  }

  TEST_CASE("defaults and validation") {
    AdamWConfig cfg;
    CHECK(cfg.lr == 2e-4);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.99);
    CHECK(cfg.weight_decay == 1e-4);
    cfg.beta2 = 1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("beta2"), ConfigError);
    cfg = {};
    cfg.lr = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("lr"), ConfigError);
  }
}

TEST_SUITE("psnr") {
  TEST_CASE("closed-form values") {
    const auto t = oracle::uniform<float>({3, 4, 4}, 1, 0.2, 0.8);
    CHECK(psnr(t, t) == kPsnrCap);
    auto off = t.detach();
    for (auto& v : off.mutable_data()) v += 0.1f;
    CHECK(psnr(off, t) == doctest::Approx(20.0).epsilon(1e-5));
    const auto zeros = Tensor<float>::zeros({2, 2}), ones = Tensor<float>::full({2, 2}, 1.0f);
    CHECK(psnr(zeros, ones) == doctest::Approx(0.0));
    CHECK(psnr(zeros, Tensor<float>::full({2, 2}, 2.0f), 2.0) == doctest::Approx(0.0));
  }

  TEST_CASE("bad inputs") {
    CHECK_THROWS_AS(psnr(Tensor<float>::zeros({2, 2}), Tensor<float>::zeros({2, 3})), DimensionError);
    CHECK_THROWS_AS(psnr(Tensor<float>::zeros({2, 2}), Tensor<float>::zeros({2, 2}), 0.0), ConfigError);
  }
}

TEST_SUITE("train config") {
  TEST_CASE("json overrides and rejects unknown keys") {
    const auto c = TrainConfig::from_json(R"({"steps": 7, "lr": 0.001, "loss_weights": {"raw": 0.5}})", {});
    CHECK(c.steps == 7);
    CHECK(c.optim.lr == 0.001);
    CHECK(c.loss_weights.raw == 0.5);
    CHECK(c.loss_weights.rgb == 1.0);
    CHECK_THROWS_WITH_AS(TrainConfig::from_json(R"({"stepz": 7})", {}), doctest::Contains("stepz"), ConfigError);
    const auto back = TrainConfig::from_json(c.to_json(), {});
    CHECK(back.to_json() == c.to_json());
  }

  TEST_CASE("validation names fields") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("batch_size"), ConfigError);
  }

  TEST_CASE("metrics csv rows leave absent fields empty") {
    CHECK(std::string(kMetricsCsvHeader) == "step,loss_total,loss_rgb,loss_raw,psnr");
    MetricsRow r;
    r.step = 3;
    r.loss_total = 0.5;
    r.loss_rgb = 0.25;
    CHECK(metrics_csv_line(r) == "3,0.5,0.25,,");
    r.loss_raw = 0.25;
    r.psnr = 12.5;
    CHECK(metrics_csv_line(r) == "3,0.5,0.25,0.25,12.5");
  }
}

TEST_SUITE("training loop") {
  TEST_CASE("batches are a pure function of seed and step") {
    auto m = model::Model<float>::build(model::ModelConfig::tiny(), 1);
    Trainer a(m, small_set(4), small_train(4)), b(m, small_set(4), small_train(4));
    for (std::int64_t s : {0, 3, 9, 2}) {
      CHECK(bitwise_equal(a.batch_at(s).x, b.batch_at(s).x));
      CHECK(bitwise_equal(a.batch_at(s).y_rgb, b.batch_at(s).y_rgb));
    }
    const auto batch = a.batch_at(0);
    CHECK(batch.x.shape() == Shape{1, 4, 8, 8});
    CHECK(batch.y_rgb.shape() == Shape{1, 3, 16, 16});
  }

  TEST_CASE("every sample is drawn once per epoch") {
    auto m = model::Model<float>::build(model::ModelConfig::tiny(), 1);
    auto cfg = small_train(1);
    cfg.crop = 16;
    const auto data = small_set(5);
    Trainer t(m, data, cfg);
    for (int epoch = 0; epoch < 2; ++epoch) {
      std::vector<int> hits(5, 0);
      for (int s = 0; s < 5; ++s) {
        const auto x = t.batch_at(epoch * 5 + s).x;
        for (int i = 0; i < 5; ++i)
          if (bitwise_equal(x, reshape(data[static_cast<std::size_t>(i)].x, {1, 4, 16, 16}))) ++hits[static_cast<std::size_t>(i)];
      }
      for (int h : hits) CHECK(h == 1);
    }
  }

  TEST_CASE("two identical runs give identical logs") {
    std::vector<std::vector<double>> losses;
    for (int run = 0; run < 2; ++run) {
      auto m = model::Model<float>::build(model::ModelConfig::tiny(), 2);
      Trainer t(m, small_set(4), small_train(6));
      t.run();
      losses.emplace_back();
      for (const auto& r : t.log()) losses.back().push_back(r.loss_total);
    }
    CHECK(losses[0] == losses[1]);
    CHECK(losses[0].size() == 6);
  }

  TEST_CASE("resume continues the loss trajectory bit-identically") {
    const auto data = small_set(4);
    auto ref_model = model::Model<float>::build(model::ModelConfig::tiny(), 3);
    Trainer ref(ref_model, data, small_train(16));
    ref.run();

    const auto dir = temp_dir("resume");
    {
      auto m = model::Model<float>::build(model::ModelConfig::tiny(), 3);
      Trainer first(m, data, small_train(5));
      first.run();
      first.save(dir / "mid.fdat");
    }
    auto m = model::Model<float>::build(model::ModelConfig::tiny(), 99);
    Trainer second(m, data, small_train(16));
    second.resume(dir / "mid.fdat");
    CHECK(second.completed_steps() == 5);
    CHECK(second.optimizer().state().step == 5);
    second.run();
    REQUIRE(second.log().size() == 11);
    for (std::size_t i = 0; i < 11; ++i) {
      CHECK(second.log()[i].step == ref.log()[5 + i].step);
      CHECK(second.log()[i].loss_total == ref.log()[5 + i].loss_total);
    }
    for (std::size_t i = 0; i < m.params().items().size(); ++i)
      CHECK(bitwise_equal(m.params().items()[i].tensor, ref_model.params().items()[i].tensor));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("without raw supervision the raw decoder never changes") {
    auto cfg = model::ModelConfig::tiny();
    cfg.use_raw_supervision = false;
    auto m = model::Model<float>::build(cfg, 4);
    std::vector<Tensor<float>> before;
    for (const auto& p : m.params().items()) before.push_back(p.tensor.detach());
    Trainer t(m, small_set(4), small_train(10));
    t.run();
    bool encoder_moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const auto& p = m.params().items()[i];
      if (p.name.rfind(model::kRawDecoderPrefix, 0) == 0) CHECK(bitwise_equal(p.tensor, before[i]));
      if (p.name.rfind(model::kEncoderPrefix, 0) == 0 && !bitwise_equal(p.tensor, before[i])) encoder_moved = true;
    }
    CHECK(encoder_moved);
    for (const auto& r : t.log()) CHECK_FALSE(r.loss_raw.has_value());
  }

  TEST_CASE("run writes checkpoints and a metrics csv") {
    const auto dir = temp_dir("run");
    auto m = model::Model<float>::build(model::ModelConfig::tiny(), 5);
    auto cfg = small_train(4);
    cfg.eval_every = 2;
    Trainer t(m, small_set(4), cfg);
    int rows = 0;
    t.run(dir, [&](const MetricsRow&) { ++rows; });
    CHECK(rows == 4);
    CHECK(std::filesystem::exists(dir / "step_000002.fdat"));
    CHECK(std::filesystem::exists(dir / "step_000004.fdat"));
    CHECK(std::filesystem::exists(dir / "last.fdat"));
    CHECK(t.log()[1].psnr.has_value());
    CHECK_FALSE(t.log()[0].psnr.has_value());
    t.write_csv(dir / "metrics.csv");
    std::ifstream is(dir / "metrics.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == kMetricsCsvHeader);
    int lines = 0;
    for (std::string l; std::getline(is, l);) ++lines;
    CHECK(lines == 4);
    const auto back = model::load<float>(dir / "last.fdat");
    CHECK(back.config() == m.config());
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("a short run lowers the loss") {
    auto m = model::Model<float>::build(model::ModelConfig::tiny(), 6);
    auto cfg = small_train(60);
    cfg.crop = 16;
    cfg.optim.lr = 2e-3;
    Trainer t(m, small_set(4), cfg);
    t.run();
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
      head += t.log()[static_cast<std::size_t>(i)].loss_total;
      tail += t.log()[t.log().size() - 1 - static_cast<std::size_t>(i)].loss_total;
    }
    CHECK(tail < head);
  }
}
