#include "fdanet/verify/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "fdanet/analysis/flops.hpp"
#include "fdanet/autodiff.hpp"
#include "fdanet/lineformer/fda.hpp"
#include "fdanet/lineformer/line_buffer.hpp"
#include "fdanet/mac_counter.hpp"
#include "fdanet/model/fdanet.hpp"
#include "fdanet/raw/dataset.hpp"
#include "fdanet/train/adamw.hpp"
#include "fdanet/train/metrics.hpp"
#include "json.hpp"

namespace fdanet::verify {

using lineformer::AttentionStrategy;

CheckLevel check_level_from_string(const std::string& s) {
  if (s == "quick") return CheckLevel::quick;
  if (s == "full") return CheckLevel::full;
  throw ConfigError("unknown check level '" + s + "' (quick|full)");
}

bool CheckReport::all_passed() const {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string CheckReport::to_text() const {
  std::string out;
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-4s %-44s measured %-12.4g tol %-10.3g %s\n",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.measured, r.tolerance,
                  r.detail.c_str());
    out += line;
  }
  const auto failed = std::count_if(results.begin(), results.end(),
                                    [](const CheckResult& r) { return !r.passed; });
  std::snprintf(line, sizeof line, "%zu checks, %lld failed, %.1f s\n", results.size(),
                static_cast<long long>(failed), seconds);
  out += line;
  return out;
}

std::string CheckReport::to_json() const {
  nlohmann::json j;
  j["passed"] = all_passed();
  j["seconds"] = seconds;
  j["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    j["results"].push_back({{"name", r.name},
                            {"passed", r.passed},
                            {"measured", r.measured},
                            {"tolerance", r.tolerance},
                            {"detail", r.detail}});
  }
  return j.dump(2);
}

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = static_cast<T>(u(rng));
  return Tensor<T>::from_data(shape, std::move(d));
}

template <typename A, typename B>
double max_abs_diff(const Tensor<A>& a, const Tensor<B>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return m;
}

// max |a - b| / max(1, |b|)
template <typename A, typename B>
double max_scaled_diff(const Tensor<A>& a, const Tensor<B>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double ref = static_cast<double>(b.data()[i]);
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - ref) / std::max(1.0, std::abs(ref)));
  }
  return m;
}

CheckResult bound(std::string name, double measured, double tol, std::string detail = {}) {
  return {std::move(name), measured < tol, measured, tol, std::move(detail)};
}

struct AttentionCase {
  std::int64_t c, h, w;
  int local_height;
};

std::vector<AttentionCase> attention_cases(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::int64_t cs[] = {2, 4, 8};
  std::vector<AttentionCase> out;
  for (int i = 0; i < count; ++i) {
    AttentionCase a;
    a.c = cs[i % 3];
    a.h = 4 + static_cast<std::int64_t>(rng() % 13);
    a.w = 4 + static_cast<std::int64_t>(rng() % 13);
    const int hs[] = {1, 3, 5, static_cast<int>(a.h)};
    a.local_height = hs[(i / 3) % 4];
    out.push_back(a);
  }
  return out;
}

void attention_checks(CheckLevel level, std::vector<CheckResult>& out) {
  const auto cases = attention_cases(level == CheckLevel::full ? 24 : 12, 11);
  double lin64 = 0, str64 = 0, lin32 = 0, str32 = 0;
  std::mt19937_64 rng(12);
  for (const auto& a : cases) {
    const Shape s = {1, a.c, a.h, a.w};
    const auto q = random_tensor<double>(s, rng), k = random_tensor<double>(s, rng),
               v = random_tensor<double>(s, rng);
    const auto ref = lineformer::line_attention_naive(q, k, v, a.local_height);
    lin64 = std::max(lin64, max_abs_diff(lineformer::line_attention_linear(q, k, v, a.local_height), ref));
    str64 = std::max(str64, max_abs_diff(lineformer::line_attention_streaming(q, k, v, a.local_height), ref));
    auto to_f = [](const Tensor<double>& t) {
      return Tensor<float>::from_data(t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
    };
    const auto qf = to_f(q), kf = to_f(k), vf = to_f(v);
    const auto ref32 = lineformer::line_attention_naive(qf, kf, vf, a.local_height);
    lin32 = std::max(lin32, max_scaled_diff(lineformer::line_attention_linear(qf, kf, vf, a.local_height), ref32));
    str32 = std::max(str32, max_scaled_diff(lineformer::line_attention_streaming(qf, kf, vf, a.local_height), ref32));
  }
  const std::string n = std::to_string(cases.size()) + " cases";
  out.push_back(bound("attention.linear_vs_naive.f64", lin64, 1e-10, n));
  out.push_back(bound("attention.streaming_vs_naive.f64", str64, 1e-10, n));
  out.push_back(bound("attention.linear_vs_naive.f32", lin32, 1e-5, n + ", scaled by max(1,|ref|)"));
  out.push_back(bound("attention.streaming_vs_naive.f32", str32, 1e-5, n + ", scaled by max(1,|ref|)"));

  // V = 0 gives zeros; a full-height window gives one shared aggregate.
  const Shape s = {1, 3, 6, 5};
  const auto q = random_tensor<double>(s, rng), k = random_tensor<double>(s, rng);
  const auto zero = lineformer::line_attention_linear(q, k, Tensor<double>::zeros(s), 3);
  double zmax = 0;
  for (double x : zero.data()) zmax = std::max(zmax, std::abs(x));
  out.push_back(bound("attention.zero_values_give_zero", zmax, 1e-300));
  std::vector<double> qc(static_cast<std::size_t>(shape_numel(s)), 0.25);
  const auto qconst = Tensor<double>::from_data(s, qc);
  const auto g = lineformer::line_attention_linear(qconst, k, random_tensor<double>(s, rng), 6);
  double spread = 0;
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t r = 0; r < 6; ++r)
      for (std::int64_t x = 0; x < 5; ++x)
        spread = std::max(spread, std::abs(g.data()[static_cast<std::size_t>((c * 6 + r) * 5 + x)] -
                                           g.data()[static_cast<std::size_t>(c * 6 * 5)]));
  out.push_back(bound("attention.full_height_shared_aggregate", spread, 1e-12));
}

void buffer_checks(CheckLevel level, std::vector<CheckResult>& out) {
  const std::int64_t c = 4, w = 8;
  const int h = 7;
  std::vector<std::int64_t> heights = {32, 64};
  if (level == CheckLevel::full) heights = {32, 64, 128, 256};
  std::mt19937_64 rng(21);
  double worst = 0;
  std::string detail;
  for (auto H : heights) {
    lineformer::LineBufferState<float> st(c, w, H, h);
    const auto row = random_tensor<float>({c * w}, rng);
    for (std::int64_t r = 0; r < H; ++r) st.push_row(r, row.data(), row.data(), row.data());
    const auto expect = static_cast<double>(std::min<std::int64_t>(h, H) * c * c + c * c);
    worst = std::max(worst, std::abs(static_cast<double>(st.peak_state_numbers()) - expect));
    detail += "H=" + std::to_string(H) + ":" + std::to_string(st.peak_state_numbers()) + " ";
  }
  out.push_back({"line_buffer.peak_state_law", worst == 0.0, worst, 0.5, detail});
}

std::pair<std::string, Tensor<double>> leaf(std::string name, Tensor<double> t) {
  t.set_requires_grad(true);
  return {std::move(name), t};
}

void gradient_checks(CheckLevel level, std::vector<CheckResult>& out) {
  constexpr double tol = 1e-4;
  std::mt19937_64 rng(31);
  auto record = [&](const std::string& name, const GradCheckResult& g) {
    out.push_back(bound("grad." + name, g.max_rel_error, tol,
                        std::to_string(g.checked) + " entries, worst " + g.worst));
  };

  {
    auto x = leaf("x", random_tensor<double>({1, 4, 5, 6}, rng));
    auto w = leaf("w", random_tensor<double>({4, 2, 3, 3}, rng));
    auto b = leaf("b", random_tensor<double>({4}, rng));
    record("conv2d", gradient_check([&] { return conv2d(x.second, w.second, std::optional<Tensor<double>>(b.second), Conv2dOptions{2, 1, 2}); },
                                    {x, w, b}, 1));
  }
  {
    auto x = leaf("x", random_tensor<double>({2, 6, 3, 4}, rng));
    auto g = leaf("gamma", random_tensor<double>({6}, rng, 0.5, 1.5));
    auto b = leaf("beta", random_tensor<double>({6}, rng));
    record("layer_norm", gradient_check([&] { return layer_norm(x.second, g.second, b.second); }, {x, g, b}, 2));
    record("group_norm",
           gradient_check([&] { return group_norm(x.second, 3, g.second, b.second); }, {x, g, b}, 3));
    record("gelu", gradient_check([&] { return gelu(x.second); }, {x}, 4));
  }
  for (auto strategy : {AttentionStrategy::naive, AttentionStrategy::linear, AttentionStrategy::streaming}) {
    auto q = leaf("q", random_tensor<double>({1, 3, 6, 4}, rng));
    auto k = leaf("k", random_tensor<double>({1, 3, 6, 4}, rng));
    auto v = leaf("v", random_tensor<double>({1, 3, 6, 4}, rng));
    record(std::string("line_attention.") + lineformer::to_string(strategy),
           gradient_check([&] { return lineformer::line_attention(q.second, k.second, v.second, 3, strategy); },
                          {q, k, v}, 5));
  }

  auto param_leaves = [](nn::ParamStore<double>& ps) {
    std::vector<std::pair<std::string, Tensor<double>>> v;
    for (auto& p : ps.items()) v.emplace_back(p.name, p.tensor);
    return v;
  };
  auto perturb = [&](nn::ParamStore<double>& ps) {
    // Non-trivial biases and affines so every path carries signal.
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& p : ps.items())
      for (auto& x : p.tensor.mutable_data()) x += u(rng);
  };
  {
    nn::ParamStore<double> ps;
    nn::ParamFactory<double> f(ps, 7);
    const auto cid = nn::CidBlockParams<double>::make(f, "cid", 4, 2);
    const auto ca = nn::ChannelAttentionParams<double>::make(f, "ca", 4);
    perturb(ps);
    auto x = leaf("x", random_tensor<double>({1, 4, 5, 6}, rng));
    auto wrt = param_leaves(ps);
    wrt.push_back(x);
    record("cid_block", gradient_check([&] { return nn::cid_block(x.second, cid); }, wrt, 6, 6));
    record("channel_global_attention",
           gradient_check([&] { return nn::channel_global_attention(x.second, ca); }, wrt, 7, 6));
  }
  for (auto kind : {lineformer::FdaKind::lineformer, lineformer::FdaKind::channel_attention,
                    lineformer::FdaKind::conv}) {
    nn::ParamStore<double> ps;
    nn::ParamFactory<double> f(ps, 8);
    const auto p = lineformer::FdaParams<double>::make(f, "fda", 4, 3, 2, kind);
    perturb(ps);
    auto x = leaf("x", random_tensor<double>({1, 4, 6, 5}, rng));
    auto wrt = param_leaves(ps);
    wrt.push_back(x);
    record(std::string("fda.") + lineformer::to_string(kind),
           gradient_check([&] { return lineformer::fda_forward(x.second, p); }, wrt, 9, 4));
  }
  if (level == CheckLevel::full) {
    auto m = model::Model<double>::build(model::ModelConfig::tiny(), 3);
    perturb(m.params());
    auto x = leaf("x", random_tensor<double>({1, 4, 8, 8}, rng, 0.0, 1.0));
    auto wrt = param_leaves(m.params());
    wrt.push_back(x);
    auto train = [&] {
      const auto o = m.forward_train(x.second);
      return concat_channels(reshape(o.y_rgb, {1, 12, 8, 8}), *o.y_raw);
    };
    record("network.tiny_end_to_end", gradient_check(train, wrt, 10, 2));
  }
}

void model_checks(std::vector<CheckResult>& out) {
  std::mt19937_64 rng(41);
  for (bool raw_sup : {true, false}) {
    auto cfg = model::ModelConfig::tiny();
    cfg.use_raw_supervision = raw_sup;
    const auto m = model::Model<float>::build(cfg, 5);
    const auto x = random_tensor<float>({1, 4, 16, 16}, rng, 0.0, 1.0);
    MacScope train_scope;
    const auto o = m.forward_train(x);
    const auto train_macs = train_scope.elapsed();
    MacScope infer_scope;
    const auto y = m.forward_infer(x);
    const auto infer_macs = infer_scope.elapsed();
    const std::string tag = raw_sup ? "raw_on" : "raw_off";
    const bool same = std::memcmp(y.data().data(), o.y_rgb.data().data(), y.data().size_bytes()) == 0;
    out.push_back({"model.infer_bitwise_equals_train_rgb." + tag, same, same ? 0.0 : 1.0, 0.5, ""});
    const auto rep = analysis::count_flops(m, x.shape());
    const double mism = std::abs(static_cast<double>(rep.train_macs()) - static_cast<double>(train_macs)) +
                        std::abs(static_cast<double>(rep.infer_macs()) - static_cast<double>(infer_macs));
    out.push_back({"flops.analytic_matches_instrumented." + tag, mism == 0.0, mism, 0.5,
                   "train " + std::to_string(train_macs) + ", infer " + std::to_string(infer_macs)});
    const double ratio = static_cast<double>(rep.infer_macs()) / static_cast<double>(rep.train_macs());
    if (raw_sup) {
      out.push_back({"flops.infer_strictly_below_train", rep.infer_macs() < rep.train_macs(), ratio, 1.0,
                     "infer/train ratio"});
    } else {
      out.push_back({"flops.infer_equals_train_without_raw_supervision",
                     rep.infer_macs() == rep.train_macs(), ratio, 1.0, "infer/train ratio"});
    }
  }
}

void raw_checks(CheckLevel level, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(51);
  const int frames = level == CheckLevel::full ? 100 : 20;
  int bad = 0;
  for (int i = 0; i < frames; ++i) {
    raw::BayerFrame f;
    f.height = 2 * (1 + static_cast<std::int64_t>(rng() % 16));
    f.width = 2 * (1 + static_cast<std::int64_t>(rng() % 16));
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    f.data.resize(static_cast<std::size_t>(f.height * f.width));
    for (auto& v : f.data) v = u(rng);
    if (raw::bayer_unpack(raw::bayer_pack(f)).data != f.data) ++bad;
  }
  out.push_back({"raw.pack_unpack_bijection", bad == 0, static_cast<double>(bad), 0.5,
                 std::to_string(frames) + " frames"});

  double worst = 0;
  for (double level_v : {0.2, 0.6}) {
    for (float dim : {0.01f, 0.02f}) {
      raw::BayerFrame clean;
      clean.height = clean.width = 256;
      clean.data.assign(256 * 256, static_cast<float>(level_v));
      raw::NoiseModel nm;
      nm.seed = 77;
      const auto noisy = raw::add_low_light_noise(clean, nm, dim);
      double s = 0, s2 = 0;
      for (float v : noisy.data) {
        s += v;
        s2 += static_cast<double>(v) * v;
      }
      const double n = static_cast<double>(noisy.data.size());
      const double mean = s / n, var = s2 / n - mean * mean;
      const double mu = level_v * dim;
      const double expect_var = mu / nm.photon_scale + nm.read_sigma * nm.read_sigma;
      worst = std::max({worst, std::abs(mean - mu) / mu, std::abs(var - expect_var) / expect_var});
    }
  }
  out.push_back(bound("raw.noise_moments", worst, 0.10, "relative error of mean and variance"));

  raw::SynthConfig sc;
  sc.height = sc.width = 32;
  sc.seed = 9;
  const auto a = raw::make_dataset(sc, 3), b = raw::make_dataset(sc, 3);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && std::ranges::equal(a[i].x.data(), b[i].x.data()) &&
           std::ranges::equal(a[i].y_raw.data(), b[i].y_raw.data()) &&
           std::ranges::equal(a[i].y_rgb.data(), b[i].y_rgb.data()) && a[i].ratio == b[i].ratio;
  }
  out.push_back({"raw.dataset_determinism", same, same ? 0.0 : 1.0, 0.5, "3 samples, seed 9"});
}

void optimizer_checks(std::vector<CheckResult>& out) {
  train::AdamWConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.1;
  nn::ParamStore<double> ps;
  auto p = ps.add("p", Tensor<double>::scalar(0.5));
  p.mutable_grad()[0] = 0.3;
  train::AdamW<double> opt(ps, cfg);
  opt.step();
  double ph = 0.5 - cfg.lr * cfg.weight_decay * 0.5;
  const double m = (1 - cfg.beta1) * 0.3, v = (1 - cfg.beta2) * 0.09;
  ph -= cfg.lr * (m / (1 - cfg.beta1)) / (std::sqrt(v / (1 - cfg.beta2)) + cfg.eps);
  out.push_back(bound("optim.adamw_single_step", std::abs(p.item() - ph), 1e-12));
  const train::AdamWConfig d;
  const bool defaults = d.lr == 2e-4 && d.beta1 == 0.9 && d.beta2 == 0.99;
  out.push_back({"optim.defaults", defaults, defaults ? 0.0 : 1.0, 0.5, "lr 2e-4, beta1 0.9, beta2 0.99"});

  const auto a = Tensor<float>::full({1, 3, 4, 4}, 0.5f);
  const auto b = Tensor<float>::full({1, 3, 4, 4}, 0.6f);
  out.push_back(bound("metrics.psnr_uniform_error", std::abs(train::psnr(a, b, 1.0) - 20.0), 1e-4));
}

}  // namespace

GradCheckResult gradient_check(const std::function<Tensor<double>()>& forward,
                               const std::vector<std::pair<std::string, Tensor<double>>>& wrt,
                               std::uint64_t seed, std::int64_t max_per_tensor, double step) {
  std::mt19937_64 rng(seed);
  Tensor<double> weights;
  auto loss = [&]() -> Tensor<double> {
    auto y = forward();
    if (!weights.defined()) weights = random_tensor<double>(y.shape(), rng);
    return sum(mul(y, weights));
  };
  for (const auto& [name, t] : wrt) Tensor<double>(t).zero_grad();
  backward(loss());
  GradCheckResult res;
  res.worst = "-";
  for (const auto& [name, tc] : wrt) {
    Tensor<double> t = tc;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(t.numel()));
    std::iota(idx.begin(), idx.end(), std::int64_t{0});
    if (static_cast<std::int64_t>(idx.size()) > max_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(max_per_tensor));
    }
    const auto numeric = finite_diff_grad([&] { return loss().item(); }, t, step, idx);
    double err = 0, scale = 1e-6;
    for (auto i : idx) {
      const auto u = static_cast<std::size_t>(i);
      const double a = t.has_grad() ? t.grad()[u] : 0.0;
      const double n = numeric.data()[u];
      err = std::max(err, std::abs(a - n));
      scale = std::max({scale, std::abs(a), std::abs(n)});
    }
    res.checked += static_cast<std::int64_t>(idx.size());
    if (res.worst == "-" || err / scale > res.max_rel_error) {
      res.max_rel_error = err / scale;
      res.worst = name;
    }
  }
  return res;
}

CheckReport run_checks(CheckLevel level) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckReport rep;
  attention_checks(level, rep.results);
  buffer_checks(level, rep.results);
  gradient_checks(level, rep.results);
  model_checks(rep.results);
  raw_checks(level, rep.results);
  optimizer_checks(rep.results);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace fdanet::verify
