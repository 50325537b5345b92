#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fdanet/autodiff.hpp"
#include "fdanet/checkpoint.hpp"
#include "fdanet/mac_counter.hpp"
#include "fdanet/ops.hpp"
#include "fdanet/verify/checks.hpp"
#include "oracles/attention_oracle.hpp"
#include "oracles/random.hpp"
#include "oracles/reference_values.hpp"

using namespace fdanet;
using oracle::uniform;

namespace {

Tensor<double> leaf(Tensor<double> t) {
  t.set_requires_grad(true);
  return t;
}

void require_grad_ok(const std::function<Tensor<double>()>& f,
                     const std::vector<std::pair<std::string, Tensor<double>>>& wrt, std::uint64_t seed) {
  const auto r = verify::gradient_check(f, wrt, seed, 24);
  INFO("worst tensor " << r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("numel matches the buffer and mismatches are rejected") {
    const auto t = Tensor<float>::zeros({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK_THROWS_AS(Tensor<float>::from_data({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor<float>::zeros({2, 0}), DimensionError);
  }

  TEST_CASE("grad is lazily allocated with the data shape") {
    auto x = leaf(uniform<double>({2, 3}, 1));
    CHECK_FALSE(x.has_grad());
    backward(sum(x));
    REQUIRE(x.has_grad());
    CHECK(x.grad().size() == 6);
  }

  TEST_CASE("no-grad guard records no history") {
    auto x = leaf(uniform<double>({4}, 1));
    {
      NoGradGuard g;
      CHECK_FALSE(sum(x).requires_grad());
    }
    CHECK(sum(x).requires_grad());
  }
}

TEST_SUITE("conv2d") {
  TEST_CASE("all-ones 3x3 sums to 9") {
    const auto y = conv2d<float>(Tensor<float>::full({1, 1, 3, 3}, 1), Tensor<float>::full({1, 1, 3, 3}, 1),
                                 std::nullopt, {1, 0, 1});
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 9.0f);
  }

  TEST_CASE("depthwise channels are independent") {
    const auto w = uniform<float>({2, 1, 3, 3}, 4);
    auto x = Tensor<float>::full({1, 2, 4, 4}, 1);
    const auto before = conv2d<float>(x, w, std::nullopt, {1, 1, 2});
    for (int i = 0; i < 16; ++i) x.mutable_data()[i] = 0;
    const auto after = conv2d<float>(x, w, std::nullopt, {1, 1, 2});
    for (int i = 16; i < 32; ++i) CHECK(before.data()[i] == after.data()[i]);
    bool changed = false;
    for (int i = 0; i < 16; ++i) changed = changed || before.data()[i] != after.data()[i];
    CHECK(changed);
  }

  TEST_CASE("1x1 conv equals the per-pixel matrix product") {
    const auto x = uniform<float>({1, 3, 5, 4}, 7);
    const auto w = uniform<float>({6, 3, 1, 1}, 8);
    const auto y = conv2d<float>(x, w, std::nullopt, {1, 0, 1});
    const auto ref = oracle::conv2d_loop(oracle::to_f64(x), oracle::to_f64(w), nullptr, 1, 3, 5, 4, 6, 1, 1, 1, 0, 1);
    CHECK(oracle::max_abs_diff(y.data(), ref) < 1e-6);
  }

  TEST_CASE("strided grouped conv with bias matches the loop oracle") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto x = uniform<double>({2, 4, 7, 6}, seed);
      const auto w = uniform<double>({6, 2, 3, 3}, seed + 10);
      const auto b = uniform<double>({6}, seed + 20);
      const auto y = conv2d<double>(x, w, b, {2, 1, 2});
      const auto bv = oracle::to_f64(b);
      const auto ref = oracle::conv2d_loop(oracle::to_f64(x), oracle::to_f64(w), &bv, 2, 4, 7, 6, 6, 3, 3, 2, 1, 2);
      CHECK(y.shape() == Shape{2, 6, 4, 3});
      CHECK(oracle::max_abs_diff(y.data(), ref) < 1e-12);
    }
  }

  TEST_CASE("geometry errors") {
    const auto x = Tensor<float>::zeros({1, 4, 5, 5});
    CHECK_THROWS_AS(conv2d<float>(x, Tensor<float>::zeros({3, 1, 3, 3}), std::nullopt, {1, 1, 3}), ConfigError);
    CHECK_THROWS_AS(conv2d<float>(x, Tensor<float>::zeros({4, 3, 3, 3}), std::nullopt, {1, 1, 1}), DimensionError);
    CHECK_THROWS_AS(conv2d<float>(x, Tensor<float>::zeros({4, 4, 7, 7}), std::nullopt, {1, 0, 1}), DimensionError);
  }

  TEST_CASE("1x1 conv on 1x4x8x8 costs 4*Cout*64 MACs") {
    MacScope s;
    conv2d<float>(Tensor<float>::zeros({1, 4, 8, 8}), Tensor<float>::zeros({5, 4, 1, 1}), std::nullopt, {1, 0, 1});
    CHECK(s.elapsed() == 4u * 5u * 64u);
  }
}

TEST_SUITE("elementwise and norms") {
  TEST_CASE("gelu uses the exact Gaussian CDF") {
    const auto y = gelu(Tensor<double>::from_data({4}, {0.0, 10.0, 1.0, -0.5}));
    CHECK(y.data()[0] == 0.0);
    CHECK(std::abs(y.data()[1] - 10.0) < 1e-6);
    CHECK(std::abs(y.data()[2] - oracle::kGeluAtOne) < 1e-15);
    CHECK(std::abs(y.data()[3] - oracle::kGeluAtMinusHalf) < 1e-15);
  }

  TEST_CASE("layer norm over channels") {
    const auto ones = Tensor<double>::full({3}, 1), zeros = Tensor<double>::zeros({3});
    const auto c = layer_norm(Tensor<double>::full({1, 3, 2, 2}, 0.7), ones, zeros);
    for (double v : c.data()) CHECK(std::abs(v) < 1e-9);
    const auto b = Tensor<double>::from_data({3}, {0.1, -0.2, 0.3});
    const auto g0 = layer_norm(uniform<double>({1, 3, 2, 2}, 1), zeros, b);
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < 4; ++i) CHECK(g0.data()[ch * 4 + i] == doctest::Approx(b.data()[ch]).epsilon(1e-15));

    const auto y = layer_norm(uniform<double>({2, 8, 3, 3}, 3), Tensor<double>::full({8}, 1), Tensor<double>::zeros({8}));
    for (int n = 0; n < 2; ++n)
      for (int p = 0; p < 9; ++p) {
        double m = 0, v = 0;
        for (int ch = 0; ch < 8; ++ch) m += y.data()[(n * 8 + ch) * 9 + p];
        m /= 8;
        for (int ch = 0; ch < 8; ++ch) v += std::pow(y.data()[(n * 8 + ch) * 9 + p] - m, 2);
        v /= 8;
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(v - 1) < 1e-4);
      }
  }

  TEST_CASE("group norm statistics match a loop oracle") {
    const auto x = uniform<double>({2, 6, 3, 4}, 5);
    const std::vector<double> xs = oracle::to_f64(x);
    for (int groups : {1, 2, 3, 6}) {
      const auto y = group_norm(x, groups, Tensor<double>::full({6}, 1), Tensor<double>::zeros({6}));
      const int per = 6 / groups;
      for (int n = 0; n < 2; ++n)
        for (int g = 0; g < groups; ++g) {
          double m = 0, v = 0;
          const int base = (n * 6 + g * per) * 12, cnt = per * 12;
          for (int i = 0; i < cnt; ++i) m += xs[base + i];
          m /= cnt;
          for (int i = 0; i < cnt; ++i) v += (xs[base + i] - m) * (xs[base + i] - m);
          v /= cnt;
          for (int i = 0; i < cnt; ++i) {
            CHECK(std::abs(y.data()[base + i] - (xs[base + i] - m) / std::sqrt(v + 1e-5)) < 1e-6);
          }
        }
    }
    CHECK_THROWS_AS(group_norm(x, 4, Tensor<double>::full({6}, 1), Tensor<double>::zeros({6})), ConfigError);
  }

  TEST_CASE("l1 loss") {
    const auto a = uniform<double>({3, 5}, 11), b = uniform<double>({3, 5}, 12);
    CHECK(l1_loss(a, a).item() == 0.0);
    std::vector<double> shifted(a.data().begin(), a.data().end());
    for (auto& v : shifted) v += 0.5;
    CHECK(l1_loss(Tensor<double>::from_data({3, 5}, shifted), a).item() == doctest::Approx(0.5).epsilon(1e-12));
    double ref = 0;
    for (int i = 0; i < 15; ++i) ref += std::abs(a.data()[i] - b.data()[i]);
    CHECK(l1_loss(a, b).item() == ref / 15);
    CHECK_THROWS_AS(l1_loss(a, Tensor<double>::zeros({5, 3})), DimensionError);
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum gives ones and l1 gives 1/numel") {
    auto x = leaf(uniform<double>({2, 3}, 1, 0.1, 1.0));
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
    x.zero_grad();
    backward(l1_loss(x, Tensor<double>::zeros({2, 3})));
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0 / 6));
  }

  TEST_CASE("leaf gradients accumulate across calls") {
    auto x = leaf(uniform<double>({3}, 2));
    backward(sum(x));
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 2.0);
  }

  TEST_CASE("non-scalar roots and detached roots are usage errors") {
    auto x = leaf(uniform<double>({3}, 2));
    CHECK_THROWS_AS(backward(gelu(x)), UsageError);
    CHECK_THROWS_AS(backward(sum(Tensor<double>::zeros({3}))), UsageError);
  }

  TEST_CASE("tape is topological and visits shared nodes once") {
    auto x = leaf(uniform<double>({4}, 3));
    const auto a = gelu(x);
    const auto loss = sum(mul(a, a));
    const auto tape = Tape<double>::record(loss);
    CHECK(tape.size() == 4);  // x, gelu, mul, sum
    const auto& order = tape.order();
    for (std::size_t i = 0; i < order.size(); ++i)
      for (const auto& p : order[i]->parents) {
        const auto it = std::find(order.begin(), order.end(), p.get());
        CHECK(it < order.begin() + static_cast<std::ptrdiff_t>(i));
      }
  }

  TEST_CASE("backward of a sum of losses is the sum of the backward passes") {
    auto x = leaf(uniform<double>({2, 3, 2, 2}, 4));
    auto f1 = [&] { return sum(gelu(x)); };
    auto f2 = [&] { return sum(mul(x, x)); };
    backward(add(f1(), f2()));
    const std::vector<double> joint(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(f1());
    backward(f2());
    for (std::size_t i = 0; i < joint.size(); ++i) CHECK(joint[i] == doctest::Approx(x.grad()[i]).epsilon(1e-14));
  }

  TEST_CASE("forward outputs are deterministic") {
    const auto x = uniform<float>({1, 4, 6, 6}, 9), w = uniform<float>({4, 1, 7, 7}, 10);
    const auto a = gelu(conv2d<float>(x, w, std::nullopt, {1, 3, 4}));
    const auto b = gelu(conv2d<float>(x, w, std::nullopt, {1, 3, 4}));
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }
}

TEST_SUITE("finite differences") {
  TEST_CASE("sum of squares") {
    auto x = Tensor<double>::from_data({3}, {1, 2, 3});
    const auto g = finite_diff_grad([&] { return sum(mul(x, x)).item(); }, x, 1e-5);
    CHECK(g.data()[0] == doctest::Approx(2).epsilon(1e-6));
    CHECK(g.data()[1] == doctest::Approx(4).epsilon(1e-6));
    CHECK(g.data()[2] == doctest::Approx(6).epsilon(1e-6));
    CHECK(x.data()[1] == 2.0);
  }

  TEST_CASE("l1 against zeros") {
    auto x = Tensor<double>::from_data({2}, {2, -3});
    const auto g = finite_diff_grad([&] { return l1_loss(x, Tensor<double>::zeros({2})).item(); }, x, 1e-5);
    CHECK(g.data()[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(g.data()[1] == doctest::Approx(-0.5).epsilon(1e-9));
  }
}

TEST_SUITE("gradient checks") {
  TEST_CASE("every op on three seeds") {
    for (std::uint64_t s : {1, 2, 3}) {
      auto x = leaf(uniform<double>({2, 4, 4, 6}, s));
      auto y = leaf(uniform<double>({2, 4, 4, 6}, s + 100));
      auto w = leaf(uniform<double>({4, 2, 3, 3}, s + 200));
      auto b = leaf(uniform<double>({4}, s + 300));
      auto g = leaf(uniform<double>({4}, s + 400, 0.5, 1.5));
      auto sc = leaf(uniform<double>({1}, s + 500));
      require_grad_ok([&] { return conv2d(x, w, std::optional<Tensor<double>>(b), Conv2dOptions{1, 1, 2}); },
                      {{"x", x}, {"w", w}, {"b", b}}, s);
      require_grad_ok([&] { return add(x, y); }, {{"x", x}, {"y", y}}, s);
      require_grad_ok([&] { return mul(x, y); }, {{"x", x}, {"y", y}}, s);
      require_grad_ok([&] { return scale(x, sc); }, {{"x", x}, {"s", sc}}, s);
      require_grad_ok([&] { return mul_scalar(x, -1.7); }, {{"x", x}}, s);
      require_grad_ok([&] { return reshape(sum(x), {1}); }, {{"x", x}}, s);
      require_grad_ok([&] { return gelu(x); }, {{"x", x}}, s);
      require_grad_ok([&] { return layer_norm(x, g, b); }, {{"x", x}, {"g", g}, {"b", b}}, s);
      require_grad_ok([&] { return group_norm(x, 2, g, b); }, {{"x", x}, {"g", g}, {"b", b}}, s);
      require_grad_ok([&] { return reshape(l1_loss(x, y), {1}); }, {{"x", x}, {"y", y}}, s);
      require_grad_ok([&] { return concat_channels(x, y); }, {{"x", x}, {"y", y}}, s);
      require_grad_ok([&] { return pixel_shuffle(x, 2); }, {{"x", x}}, s);
      require_grad_ok([&] { return pixel_unshuffle(x, 2); }, {{"x", x}}, s);
      auto r = leaf(uniform<double>({2, 3, 5}, s + 600));
      auto r2 = leaf(uniform<double>({2, 4, 5}, s + 700));
      auto r3 = leaf(uniform<double>({2, 5, 4}, s + 800));
      require_grad_ok([&] { return l2_normalize_rows(r); }, {{"r", r}}, s);
      require_grad_ok([&] { return softmax_rows(r); }, {{"r", r}}, s);
      require_grad_ok([&] { return bmm(r, r2, true); }, {{"a", r}, {"b", r2}}, s);
      require_grad_ok([&] { return bmm(r, r3); }, {{"a", r}, {"b", r3}}, s);
    }
  }
}

TEST_SUITE("checkpoint files") {
  namespace fs = std::filesystem;

  TEST_CASE("roundtrip and corruption diagnostics") {
    const fs::path dir = fs::temp_directory_path() / "fdanet_ckpt_test";
    fs::create_directories(dir);
    Checkpoint c;
    c.metadata_json = R"({"k":1})";
    c.tensors.push_back({"a", {2, 2}, {1, 2, 3, 4}});
    c.tensors.push_back({"b.c", {3}, {-1, 0.5f, 7}});
    save_checkpoint(dir / "ok.fdat", c);
    const auto back = load_checkpoint(dir / "ok.fdat");
    REQUIRE(back.tensors.size() == 2);
    CHECK(back.find("b.c")->values == c.tensors[1].values);
    CHECK(back.find("a")->shape == Shape{2, 2});

    std::string bytes;
    {
      std::ifstream is(dir / "ok.fdat", std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(is), {});
    }
    {
      std::ofstream os(dir / "bad_magic.fdat", std::ios::binary);
      os << "XXXX1" << bytes.substr(5);
    }
    {
      std::ofstream os(dir / "truncated.fdat", std::ios::binary);
      os << bytes.substr(0, bytes.size() - 6);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad_magic.fdat"), doctest::Contains("byte offset 0"), FormatError);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "truncated.fdat"), doctest::Contains("byte offset"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.fdat"), IoError);
    fs::remove_all(dir);
  }
}
