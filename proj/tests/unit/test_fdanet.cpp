#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "fdanet/autodiff.hpp"
#include "fdanet/mac_counter.hpp"
#include "fdanet/model/fdanet.hpp"
#include "fdanet/verify/checks.hpp"
#include "json.hpp"
#include "oracles/random.hpp"

using namespace fdanet;
using namespace fdanet::model;
using oracle::uniform;

namespace {

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fdanet_test_model_" + name);
}

template <typename T>
bool prefix_has_nonzero_grad(const nn::ParamStore<T>& ps, const std::string& prefix) {
  for (const auto& p : ps.items()) {
    if (p.name.rfind(prefix, 0) != 0 || !p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad())
      if (g != T(0)) return true;
  }
  return false;
}

template <typename T>
bool prefix_has_any_grad(const nn::ParamStore<T>& ps, const std::string& prefix) {
  for (const auto& p : ps.items())
    if (p.name.rfind(prefix, 0) == 0 && p.tensor.has_grad()) return true;
  return false;
}

template <typename T>
void clear_grads(nn::ParamStore<T>& ps) {
  for (auto& p : ps.items()) p.tensor.zero_grad();
}

}  // namespace

TEST_SUITE("model structure") {
  TEST_CASE("shape law on a 1x4x32x32 input") {
    const auto m = Model<float>::build(ModelConfig{}, 1);
    const auto x = uniform<float>({1, 4, 32, 32}, 2, 0.0, 1.0);
    const auto o = m.forward_train(x);
    CHECK(o.y_rgb.shape() == Shape{1, 3, 64, 64});
    REQUIRE(o.y_raw.has_value());
    CHECK(o.y_raw->shape() == Shape{1, 4, 32, 32});
    CHECK(m.forward_infer(x).shape() == Shape{1, 3, 64, 64});
  }

  TEST_CASE("indivisible extents are a dimension error") {
    const auto m = Model<float>::build(ModelConfig{}, 1);
    CHECK_THROWS_AS(m.forward_infer(Tensor<float>::zeros({1, 4, 30, 32})), DimensionError);
    CHECK_THROWS_AS(m.forward_infer(Tensor<float>::zeros({1, 3, 32, 32})), DimensionError);
  }

  TEST_CASE("invalid configs name the field") {
    ModelConfig c;
    c.base_channels = 10;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("groupnorm_groups"), ConfigError);
    c = ModelConfig{};
    c.local_height = {7, 4, 7};
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("local_height"), ConfigError);
    c = ModelConfig{};
    c.local_height = {7, 7};
    CHECK_THROWS_AS(Model<float>::build(c, 0), ConfigError);
  }

  TEST_CASE("equal seeds give bit-identical parameters") {
    const auto a = Model<float>::build(ModelConfig{}, 42), b = Model<float>::build(ModelConfig{}, 42);
    const auto c = Model<float>::build(ModelConfig{}, 43);
    REQUIRE(a.params().items().size() == b.params().items().size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params().items().size(); ++i) {
      CHECK(bitwise_equal(a.params().items()[i].tensor, b.params().items()[i].tensor));
      if (!bitwise_equal(a.params().items()[i].tensor, c.params().items()[i].tensor)) any_diff = true;
    }
    CHECK(any_diff);
    CHECK(a.parameter_count() == b.parameter_count());
    MESSAGE("default parameter count: " << a.parameter_count());
  }

  TEST_CASE("parameter count equals the enumerated sum") {
    const auto m = Model<float>::build(ModelConfig{}, 0);
    std::int64_t sum = 0;
    for (const auto& p : m.params().items()) sum += p.tensor.numel();
    CHECK(sum == m.parameter_count());
    CHECK(m.params().count(kEncoderPrefix) + m.params().count(kFdaPrefix) + m.params().count(kRgbDecoderPrefix) +
              m.params().count(kRawDecoderPrefix) ==
          sum);
  }

  TEST_CASE("one FDA module per scale, none when disabled") {
    for (int scales : {2, 3, 4}) {
      ModelConfig c;
      c.num_scales = scales;
      c.local_height.assign(static_cast<std::size_t>(scales), 5);
      const auto m = Model<float>::build(c, 0);
      CHECK(m.fda().size() == static_cast<std::size_t>(scales));
      c.use_fda = false;
      const auto off = Model<float>::build(c, 0);
      CHECK(off.fda().empty());
      CHECK(off.params().count(kFdaPrefix) == 0);
    }
  }

  TEST_CASE("disabled FDA feeds encoder features straight to the sRGB decoder") {
    auto c = ModelConfig::tiny();
    c.use_fda = false;
    const auto m = Model<float>::build(c, 3);
    const auto x = uniform<float>({1, 4, 16, 16}, 3, 0.0, 1.0);
    const auto wired = m.decode_rgb(m.encode(x));
    CHECK(bitwise_equal(wired, m.forward_infer(x)));
    CHECK(bitwise_equal(wired, m.forward_train(x).y_rgb));
  }

  TEST_CASE("the train graph evaluates the encoder once") {
    const auto m = Model<float>::build(ModelConfig::tiny(), 1);
    const auto x = uniform<float>({1, 4, 16, 16}, 1, 0.0, 1.0);
    const auto before = m.encoder_calls();
    const auto o = m.forward_train(x);
    CHECK(m.encoder_calls() - before == 1);
    CHECK(o.y_raw.has_value());
  }

  TEST_CASE("the inference graph never runs the raw decoder") {
    const auto m = Model<float>::build(ModelConfig::tiny(), 1);
    const auto x = uniform<float>({1, 4, 16, 16}, 1, 0.0, 1.0);
    const auto raw_before = m.raw_decoder_calls();
    m.forward_infer(x);
    CHECK(m.raw_decoder_calls() == raw_before);
    MacScope train;
    m.forward_train(x);
    const auto train_macs = train.elapsed();
    MacScope infer;
    m.forward_infer(x);
    CHECK(infer.elapsed() < train_macs);
  }

  TEST_CASE("inference output is bitwise equal to the train sRGB output on 10 seeds") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto m = Model<float>::build(ModelConfig::tiny(), s);
      const auto x = uniform<float>({1, 4, 16, 24}, 100 + s, 0.0, 1.0);
      CHECK(bitwise_equal(m.forward_infer(x), m.forward_train(x).y_rgb));
    }
  }

  TEST_CASE("streaming and linear strategies agree end to end") {
    const auto m = Model<float>::build(ModelConfig::tiny(), 5);
    const auto x = uniform<float>({1, 4, 16, 16}, 5, 0.0, 1.0);
    const auto a = m.forward_infer(x, {lineformer::AttentionStrategy::linear});
    const auto b = m.forward_infer(x, {lineformer::AttentionStrategy::streaming});
    CHECK(oracle::max_abs_diff(a.data(), b.data()) < 1e-5);
  }
}

TEST_SUITE("model ablations") {
  TEST_CASE("the four ablation variants are pure configuration") {
    const auto x = uniform<float>({1, 4, 16, 16}, 9, 0.0, 1.0);
    std::set<std::int64_t> counts;
    for (bool fda : {false, true})
      for (bool raw : {false, true}) {
        auto c = ModelConfig::tiny();
        c.use_fda = fda;
        c.use_raw_supervision = raw;
        const auto m = Model<float>::build(c, 7);
        const auto o = m.forward_train(x);
        CHECK(o.y_raw.has_value() == raw);
        CHECK(m.fda().empty() == !fda);
        counts.insert(m.parameter_count());
      }
    CHECK(counts.size() >= 2);
  }

  TEST_CASE("every FDA kind builds and runs") {
    for (auto kind : {lineformer::FdaKind::lineformer, lineformer::FdaKind::conv,
                      lineformer::FdaKind::channel_attention}) {
      auto c = ModelConfig::tiny();
      c.fda_kind = kind;
      const auto m = Model<float>::build(c, 2);
      CHECK(m.forward_infer(uniform<float>({1, 4, 8, 8}, 2, 0.0, 1.0)).shape() == Shape{1, 3, 16, 16});
    }
  }
}

TEST_SUITE("gradient topology") {
  TEST_CASE("encoder sees both losses, FDA only the sRGB loss, raw decoder only the raw loss") {
    auto m = Model<double>::build(ModelConfig::tiny(), 4);
    const auto x = uniform<double>({1, 4, 8, 8}, 4, 0.0, 1.0);
    const auto t_rgb = uniform<double>({1, 3, 16, 16}, 5, 0.0, 1.0);
    const auto t_raw = uniform<double>({1, 4, 8, 8}, 6, 0.0, 1.0);

    // sRGB loss alone.
    clear_grads(m.params());
    backward(l1_loss(m.forward_train(x).y_rgb, t_rgb));
    CHECK(prefix_has_nonzero_grad(m.params(), kEncoderPrefix));
    CHECK(prefix_has_nonzero_grad(m.params(), kFdaPrefix));
    CHECK_FALSE(prefix_has_any_grad(m.params(), kRawDecoderPrefix));

    // Raw loss alone.
    clear_grads(m.params());
    backward(l1_loss(*m.forward_train(x).y_raw, t_raw));
    CHECK(prefix_has_nonzero_grad(m.params(), kEncoderPrefix));
    CHECK_FALSE(prefix_has_any_grad(m.params(), kFdaPrefix));
    CHECK_FALSE(prefix_has_any_grad(m.params(), kRgbDecoderPrefix));
    CHECK(prefix_has_nonzero_grad(m.params(), kRawDecoderPrefix));

    // Detaching the sRGB branch leaves the raw loss as the only encoder signal.
    clear_grads(m.params());
    ForwardOptions detach_rgb;
    detach_rgb.detach_rgb_branch = true;
    auto o = m.forward_train(x, detach_rgb);
    backward(add(l1_loss(o.y_rgb, t_rgb), l1_loss(*o.y_raw, t_raw)));
    CHECK(prefix_has_nonzero_grad(m.params(), kEncoderPrefix));
    CHECK(prefix_has_nonzero_grad(m.params(), kFdaPrefix));

    // Detaching both branches starves the encoder.
    clear_grads(m.params());
    ForwardOptions detach_both;
    detach_both.detach_rgb_branch = detach_both.detach_raw_branch = true;
    o = m.forward_train(x, detach_both);
    backward(add(l1_loss(o.y_rgb, t_rgb), l1_loss(*o.y_raw, t_raw)));
    CHECK_FALSE(prefix_has_any_grad(m.params(), kEncoderPrefix));
    CHECK(prefix_has_nonzero_grad(m.params(), kRawDecoderPrefix));
  }

  TEST_CASE("end-to-end gradient check on a tiny f64 network") {
    auto m = Model<double>::build(ModelConfig::tiny(), 10);
    auto x = uniform<double>({1, 4, 8, 8}, 10, 0.0, 1.0);
    x.set_requires_grad(true);
    std::vector<std::pair<std::string, Tensor<double>>> wrt;
    for (auto& p : m.params().items()) wrt.emplace_back(p.name, p.tensor);
    wrt.emplace_back("x", x);
    const auto r = verify::gradient_check(
        [&] {
          const auto o = m.forward_train(x);
          return concat_channels(reshape(o.y_rgb, {1, 12, 8, 8}), *o.y_raw);
        },
        wrt, 10, 2);
    INFO("worst tensor: ", r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_SUITE("model serialization") {
  TEST_CASE("save and load roundtrip is forward-bitwise identical") {
    const auto m = Model<float>::build(ModelConfig{}, 8);
    const auto path = temp_path("roundtrip.fdat");
    save(m, path);
    const auto back = load<float>(path);
    CHECK(back.config() == m.config());
    const auto x = uniform<float>({1, 4, 16, 16}, 8, 0.0, 1.0);
    CHECK(bitwise_equal(m.forward_infer(x), back.forward_infer(x)));
    std::filesystem::remove(path);
  }

  TEST_CASE("header lists every parameter tensor") {
    const auto m = Model<float>::build(ModelConfig::tiny(), 8);
    const auto path = temp_path("header.fdat");
    save(m, path);
    const auto file = read_framed(path, kCheckpointMagic);
    const auto header = nlohmann::json::parse(file.header_json);
    std::set<std::string> names;
    for (const auto& t : header.at("tensors")) names.insert(t.at("name").get<std::string>());
    for (const auto& p : m.params().items()) CHECK(names.count(p.name) == 1);
    CHECK(names.size() == m.params().items().size());
    CHECK(header.at("metadata").contains("model_config"));
    std::filesystem::remove(path);
  }

  TEST_CASE("loading into a mismatched config names the tensor") {
    const auto small = Model<float>::build(ModelConfig::tiny(), 1);
    auto big_cfg = ModelConfig::tiny();
    big_cfg.base_channels = 16;
    auto big = Model<float>::build(big_cfg, 1);
    CHECK_THROWS_WITH_AS(load_into(big, to_checkpoint(small)), doctest::Contains("encoder."), DimensionError);
  }

  TEST_CASE("missing tensors are a format error") {
    auto m = Model<float>::build(ModelConfig::tiny(), 1);
    auto ck = to_checkpoint(m);
    const std::string dropped = ck.tensors.back().name;
    ck.tensors.pop_back();
    CHECK_THROWS_WITH_AS(load_into(m, ck), doctest::Contains(dropped.c_str()), FormatError);
  }

  TEST_CASE("a truncated checkpoint reports a byte offset") {
    const auto m = Model<float>::build(ModelConfig::tiny(), 1);
    const auto path = temp_path("trunc.fdat");
    save(m, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 6);
    CHECK_THROWS_WITH_AS(load<float>(path), doctest::Contains("byte offset"), FormatError);
    std::filesystem::remove(path);
  }
}
