#include "fdanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fdanet/mac_counter.hpp"

namespace fdanet {

namespace {

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op, const char* what) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

template <typename T>
void accumulate(NodeT<T>& target, const std::vector<T>& delta) {
  auto& g = target.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// Output columns [lo, hi) whose input column ow*stride - pad + k lies in [0, extent).
std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t out_extent, std::int64_t in_extent,
                                                  int stride, int pad, std::int64_t k) {
  std::int64_t lo = std::max<std::int64_t>(0, floor_div(pad - k + stride - 1, stride));
  std::int64_t last = in_extent - 1 + pad - k;
  if (last < 0) return {0, 0};
  std::int64_t hi = std::min<std::int64_t>(out_extent, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo, cin_g, cout_g;
  int stride, pad, groups;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias, Conv2dOptions o) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (o.groups <= 0 || o.stride <= 0 || o.padding < 0) {
    throw ConfigError("conv2d: stride/groups must be positive and padding non-negative");
  }
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = o.stride;
  g.pad = o.padding;
  g.groups = o.groups;
  if (g.cin % o.groups != 0) {
    throw ConfigError("conv2d: groups=" + std::to_string(o.groups) +
                      " does not divide input channels " + std::to_string(g.cin));
  }
  if (g.cout % o.groups != 0) {
    throw ConfigError("conv2d: groups=" + std::to_string(o.groups) +
                      " does not divide output channels " + std::to_string(g.cout));
  }
  g.cin_g = g.cin / o.groups;
  g.cout_g = g.cout / o.groups;
  if (weight.dim(1) != g.cin_g) {
    throw DimensionError("conv2d: weight axis 1 (" + std::to_string(weight.dim(1)) +
                         ") must equal input axis 1 / groups (" + std::to_string(g.cin_g) + ")");
  }
  if (g.h + 2 * o.padding < g.kh || g.w + 2 * o.padding < g.kw) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                         " exceeds padded input axes 2,3 of " + shape_str(x.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias->shape()) +
                         " must be [weight axis 0 = " + std::to_string(g.cout) + "]");
  }
  g.ho = (g.h + 2 * o.padding - g.kh) / o.stride + 1;
  g.wo = (g.w + 2 * o.padding - g.kw) / o.stride + 1;
  return g;
}

// Visits every (input plane, weight tap, output plane) triple of a conv with
// clipped row/column ranges. fn(x_plane_off, w_off, out_plane_off, ki, kj).
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t co = 0; co < g.cout; ++co) {
      const std::int64_t grp = co / g.cout_g;
      const std::int64_t out_off = (n * g.cout + co) * g.ho * g.wo;
      for (std::int64_t ci = 0; ci < g.cin_g; ++ci) {
        const std::int64_t cin_abs = grp * g.cin_g + ci;
        const std::int64_t x_off = (n * g.cin + cin_abs) * g.h * g.w;
        for (std::int64_t ki = 0; ki < g.kh; ++ki) {
          for (std::int64_t kj = 0; kj < g.kw; ++kj) {
            const std::int64_t w_off = ((co * g.cin_g + ci) * g.kh + ki) * g.kw + kj;
            fn(x_off, w_off, out_off, ki, kj);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv2dOptions opts) {
  const ConvGeometry g = conv_geometry(x, weight, bias, opts);
  std::vector<T> out(static_cast<std::size_t>(g.n * g.cout * g.ho * g.wo), T(0));
  if (bias) {
    const auto b = bias->data();
    for (std::int64_t n = 0; n < g.n; ++n)
      for (std::int64_t co = 0; co < g.cout; ++co)
        std::fill_n(out.begin() + (n * g.cout + co) * g.ho * g.wo, g.ho * g.wo, b[co]);
  }
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  T* od = out.data();
  for_each_tap(g, [&](std::int64_t x_off, std::int64_t w_off, std::int64_t o_off, std::int64_t ki,
                      std::int64_t kj) {
    const T wv = wd[w_off];
    const auto [r0, r1] = valid_range(g.ho, g.h, g.stride, g.pad, ki);
    const auto [c0, c1] = valid_range(g.wo, g.w, g.stride, g.pad, kj);
    for (std::int64_t oh = r0; oh < r1; ++oh) {
      const T* xrow = xd + x_off + (oh * g.stride - g.pad + ki) * g.w - g.pad + kj;
      T* orow = od + o_off + oh * g.wo;
      for (std::int64_t ow = c0; ow < c1; ++ow) orow[ow] += wv * xrow[ow * g.stride];
    }
  });
  MacCounter::add(static_cast<std::uint64_t>(g.n * g.cout * g.ho * g.wo * g.cin_g * g.kh * g.kw));

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias ? bias->node() : nullptr;
  return detail::make_result<T>(
      {g.n, g.cout, g.ho, g.wo}, std::move(out), {xn, wn, bn}, "conv2d",
      [xn, wn, bn, g](NodeT<T>& self) {
        const T* dout = self.grad.data();
        const bool want_x = xn->requires_grad;
        const bool want_w = wn->requires_grad;
        if (bn && bn->requires_grad) {
          auto& db = bn->ensure_grad();
          for (std::int64_t n = 0; n < g.n; ++n)
            for (std::int64_t co = 0; co < g.cout; ++co) {
              const T* p = dout + (n * g.cout + co) * g.ho * g.wo;
              T acc = T(0);
              for (std::int64_t i = 0; i < g.ho * g.wo; ++i) acc += p[i];
              db[co] += acc;
            }
        }
        if (!want_x && !want_w) return;
        T* dx = want_x ? xn->ensure_grad().data() : nullptr;
        T* dw = want_w ? wn->ensure_grad().data() : nullptr;
        const T* xd = xn->data.data();
        const T* wd = wn->data.data();
        for_each_tap(g, [&](std::int64_t x_off, std::int64_t w_off, std::int64_t o_off,
                            std::int64_t ki, std::int64_t kj) {
          const auto [r0, r1] = valid_range(g.ho, g.h, g.stride, g.pad, ki);
          const auto [c0, c1] = valid_range(g.wo, g.w, g.stride, g.pad, kj);
          const T wv = wd[w_off];
          T wacc = T(0);
          for (std::int64_t oh = r0; oh < r1; ++oh) {
            const std::int64_t in_row = x_off + (oh * g.stride - g.pad + ki) * g.w - g.pad + kj;
            const T* grow = dout + o_off + oh * g.wo;
            if (dx) {
              T* dxrow = dx + in_row;
              for (std::int64_t ow = c0; ow < c1; ++ow) dxrow[ow * g.stride] += wv * grow[ow];
            }
            if (dw) {
              const T* xrow = xd + in_row;
              for (std::int64_t ow = c0; ow < c1; ++ow) wacc += xrow[ow * g.stride] * grow[ow];
            }
          }
          if (dw) dw[w_off] += wacc;
        });
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, "add",
                                [an, bn](NodeT<T>& self) {
                                  if (an->requires_grad) accumulate(*an, self.grad);
                                  if (bn->requires_grad) accumulate(*bn, self.grad);
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn}, "mul",
                                [an, bn](NodeT<T>& self) {
                                  const auto& g = self.grad;
                                  if (an->requires_grad) {
                                    auto& da = an->ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      da[i] += g[i] * bn->data[i];
                                  }
                                  if (bn->requires_grad) {
                                    auto& db = bn->ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      db[i] += g[i] * an->data[i];
                                  }
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw DimensionError("scale: factor must have one element, got " +
                                           shape_str(s.shape()));
  const T f = s.data()[0];
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= f;
  auto xn = x.node();
  auto sn = s.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn, sn}, "scale",
                                [xn, sn](NodeT<T>& self) {
                                  const auto& g = self.grad;
                                  if (xn->requires_grad) {
                                    auto& dx = xn->ensure_grad();
                                    const T f = sn->data[0];
                                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * f;
                                  }
                                  if (sn->requires_grad) {
                                    T acc = T(0);
                                    for (std::size_t i = 0; i < g.size(); ++i)
                                      acc += g[i] * xn->data[i];
                                    sn->ensure_grad()[0] += acc;
                                  }
                                });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, double c) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = static_cast<T>(v * c);
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn}, "mul_scalar",
                                [xn, c](NodeT<T>& self) {
                                  auto& dx = xn->ensure_grad();
                                  for (std::size_t i = 0; i < dx.size(); ++i)
                                    dx[i] += static_cast<T>(self.grad[i] * c);
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (auto v : x.data()) acc += v;
  auto xn = x.node();
  return detail::make_result<T>({1}, {static_cast<T>(acc)}, {xn}, "sum", [xn](NodeT<T>& self) {
    auto& dx = xn->ensure_grad();
    const T g = self.grad[0];
    for (auto& v : dx) v += g;
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
  }
  auto xn = x.node();
  return detail::make_result<T>(x.shape(), std::move(out), {xn}, "gelu", [xn](NodeT<T>& self) {
    auto& dx = xn->ensure_grad();
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = xn->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] += static_cast<T>(self.grad[i] * (cdf + v * pdf));
    }
  });
}

namespace {

// Shared backward for normalizations: given groups of `m` elements reached by
// index(gi, k), xhat, per-group rstd and per-element gamma.
template <typename T, typename Index, typename Gamma>
void norm_backward(std::int64_t groups, std::int64_t m, Index&& index, Gamma&& gamma_of,
                   const std::vector<T>& dy, const std::vector<double>& xhat,
                   const std::vector<double>& rstd, T* dx) {
  for (std::int64_t gi = 0; gi < groups; ++gi) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::int64_t k = 0; k < m; ++k) {
      const auto idx = index(gi, k);
      const double d = dy[idx] * gamma_of(idx);
      mean_d += d;
      mean_dx += d * xhat[idx];
    }
    mean_d /= static_cast<double>(m);
    mean_dx /= static_cast<double>(m);
    for (std::int64_t k = 0; k < m; ++k) {
      const auto idx = index(gi, k);
      const double d = dy[idx] * gamma_of(idx);
      dx[idx] += static_cast<T>(rstd[gi] * (d - mean_d - xhat[idx] * mean_dx));
    }
  }
}

template <typename T>
void check_affine(const Tensor<T>& gamma, const Tensor<T>& beta, std::int64_t c, const char* op) {
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw DimensionError(std::string(op) + ": affine parameters must be [" + std::to_string(c) +
                         "], got gamma " + shape_str(gamma.shape()) + " beta " +
                         shape_str(beta.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  require_rank(x, 4, "layer_norm", "input");
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check_affine(gamma, beta, c, "layer_norm");
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<T> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> rstd(static_cast<std::size_t>(n * hw));
  auto index = [c, hw](std::int64_t loc, std::int64_t ch) {
    const std::int64_t ni = loc / hw, p = loc % hw;
    return static_cast<std::size_t>((ni * c + ch) * hw + p);
  };
  for (std::int64_t loc = 0; loc < n * hw; ++loc) {
    double mean = 0.0;
    for (std::int64_t ch = 0; ch < c; ++ch) mean += xd[index(loc, ch)];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double d = xd[index(loc, ch)] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(loc)] = r;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto i = index(loc, ch);
      xhat[i] = (xd[i] - mean) * r;
      out[i] = static_cast<T>(gd[ch] * xhat[i] + bd[ch]);
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(2 * xd.size()));
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn, gn, bn}, "layer_norm",
      [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), n, c, hw,
       index](NodeT<T>& self) {
        const auto& dy = self.grad;
        if (gn->requires_grad || bn->requires_grad) {
          auto& dg = gn->ensure_grad();
          auto& db = bn->ensure_grad();
          for (std::size_t i = 0; i < dy.size(); ++i) {
            const auto ch = static_cast<std::size_t>((static_cast<std::int64_t>(i) / hw) % c);
            dg[ch] += static_cast<T>(dy[i] * xhat[i]);
            db[ch] += dy[i];
          }
        }
        if (!xn->requires_grad) return;
        norm_backward<T>(
            n * hw, c, index,
            [&](std::size_t i) {
              return static_cast<double>(gn->data[static_cast<std::size_t>(
                  (static_cast<std::int64_t>(i) / hw) % c)]);
            },
            dy, xhat, rstd, xn->ensure_grad().data());
      });
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int num_groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps) {
  require_rank(x, 4, "group_norm", "input");
  if (!(eps > 0)) throw ConfigError("group_norm: eps must be positive");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (num_groups <= 0 || c % num_groups != 0) {
    throw ConfigError("group_norm: num_groups=" + std::to_string(num_groups) +
                      " does not divide channels " + std::to_string(c));
  }
  check_affine(gamma, beta, c, "group_norm");
  const std::int64_t groups = n * num_groups;
  const std::int64_t m = (c / num_groups) * hw;  // contiguous in NCHW
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<T> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> rstd(static_cast<std::size_t>(groups));
  for (std::int64_t gi = 0; gi < groups; ++gi) {
    const std::int64_t base = gi * m;
    double mean = 0.0;
    for (std::int64_t k = 0; k < m; ++k) mean += xd[base + k];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t k = 0; k < m; ++k) {
      const double d = xd[base + k] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(gi)] = r;
    for (std::int64_t k = 0; k < m; ++k) {
      const auto i = static_cast<std::size_t>(base + k);
      const auto ch = (base + k) / hw % c;
      xhat[i] = (xd[i] - mean) * r;
      out[i] = static_cast<T>(gd[ch] * xhat[i] + bd[ch]);
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(2 * xd.size()));
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn, gn, bn}, "group_norm",
      [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), groups, m, c,
       hw](NodeT<T>& self) {
        const auto& dy = self.grad;
        if (gn->requires_grad || bn->requires_grad) {
          auto& dg = gn->ensure_grad();
          auto& db = bn->ensure_grad();
          for (std::size_t i = 0; i < dy.size(); ++i) {
            const auto ch = static_cast<std::size_t>((static_cast<std::int64_t>(i) / hw) % c);
            dg[ch] += static_cast<T>(dy[i] * xhat[i]);
            db[ch] += dy[i];
          }
        }
        if (!xn->requires_grad) return;
        norm_backward<T>(
            groups, m,
            [m](std::int64_t gi, std::int64_t k) { return static_cast<std::size_t>(gi * m + k); },
            [&](std::size_t i) {
              return static_cast<double>(gn->data[static_cast<std::size_t>(
                  (static_cast<std::int64_t>(i) / hw) % c)]);
            },
            dy, xhat, rstd, xn->ensure_grad().data());
      });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "l1_loss");
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const double inv_n = 1.0 / static_cast<double>(p.size());
  auto pn = pred.node(), tn = target.node();
  return detail::make_result<T>(
      {1}, {static_cast<T>(acc * inv_n)}, {pn, tn}, "l1_loss", [pn, tn, inv_n](NodeT<T>& self) {
        const double g = self.grad[0] * inv_n;
        for (int side = 0; side < 2; ++side) {
          auto& node = side == 0 ? *pn : *tn;
          if (!node.requires_grad) continue;
          auto& d = node.ensure_grad();
          const double sgn_side = side == 0 ? 1.0 : -1.0;
          for (std::size_t i = 0; i < d.size(); ++i) {
            const double diff = static_cast<double>(pn->data[i]) - tn->data[i];
            const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
            d[i] += static_cast<T>(sgn_side * sgn * g);
          }
        }
      });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 4, "concat_channels", "first input");
  require_rank(b, 4, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: axes 0,2,3 of " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " must agree");
  }
  const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n * (ca + cb) * hw));
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * ca * hw, ca * hw, out.begin() + i * (ca + cb) * hw);
    std::copy_n(b.data().begin() + i * cb * hw, cb * hw,
                out.begin() + i * (ca + cb) * hw + ca * hw);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(
      {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {an, bn}, "concat_channels",
      [an, bn, n, ca, cb, hw](NodeT<T>& self) {
        for (std::int64_t i = 0; i < n; ++i) {
          const T* g = self.grad.data() + i * (ca + cb) * hw;
          if (an->requires_grad) {
            T* d = an->ensure_grad().data() + i * ca * hw;
            for (std::int64_t k = 0; k < ca * hw; ++k) d[k] += g[k];
          }
          if (bn->requires_grad) {
            T* d = bn->ensure_grad().data() + i * cb * hw;
            for (std::int64_t k = 0; k < cb * hw; ++k) d[k] += g[ca * hw + k];
          }
        }
      });
}

namespace {

// Index map from shuffled (out) layout to unshuffled (in) layout.
std::vector<std::size_t> shuffle_map(std::int64_t n, std::int64_t c, std::int64_t h,
                                     std::int64_t w, int r) {
  // in: [n, c*r*r, h, w]; out: [n, c, h*r, w*r]
  std::vector<std::size_t> map(static_cast<std::size_t>(n * c * r * r * h * w));
  const std::int64_t ho = h * r, wo = w * r;
  std::size_t o = 0;
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t y = 0; y < ho; ++y)
        for (std::int64_t x = 0; x < wo; ++x) {
          const std::int64_t cin = ci * r * r + (y % r) * r + (x % r);
          map[o++] = static_cast<std::size_t>(((ni * c * r * r + cin) * h + y / r) * w + x / r);
        }
  return map;
}

template <typename T>
Tensor<T> permute_copy(const Tensor<T>& x, Shape out_shape, std::vector<std::size_t> map,
                       bool gather, const char* op) {
  // gather: out[i] = x[map[i]]; otherwise out[map[i]] = x[i].
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (gather) out[i] = xd[map[i]];
    else out[map[i]] = xd[i];
  }
  auto xn = x.node();
  return detail::make_result<T>(std::move(out_shape), std::move(out), {xn}, op,
                                [xn, map = std::move(map), gather](NodeT<T>& self) {
                                  auto& dx = xn->ensure_grad();
                                  for (std::size_t i = 0; i < map.size(); ++i) {
                                    if (gather) dx[map[i]] += self.grad[i];
                                    else dx[i] += self.grad[map[i]];
                                  }
                                });
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  require_rank(x, 4, "pixel_shuffle", "input");
  if (r <= 0 || x.dim(1) % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: channel axis " + std::to_string(x.dim(1)) +
                         " not divisible by " + std::to_string(r * r));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1) / (r * r), h = x.dim(2), w = x.dim(3);
  return permute_copy(x, {n, c, h * r, w * r}, shuffle_map(n, c, h, w, r), true,
                      "pixel_shuffle");
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  require_rank(x, 4, "pixel_unshuffle", "input");
  if (r <= 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw DimensionError("pixel_unshuffle: spatial axes 2,3 of " + shape_str(x.shape()) +
                         " not divisible by " + std::to_string(r));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2) / r, w = x.dim(3) / r;
  return permute_copy(x, {n, c * r * r, h, w}, shuffle_map(n, c, h, w, r), false,
                      "pixel_unshuffle");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  auto xn = x.node();
  return detail::make_result<T>(std::move(shape), xn->data, {xn}, "reshape",
                                [xn](NodeT<T>& self) { accumulate(*xn, self.grad); });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, double eps) {
  const std::int64_t len = x.shape().back();
  const std::int64_t rows = x.numel() / len;
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  std::vector<double> norms(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::int64_t k = 0; k < len; ++k) ss += static_cast<double>(xd[r * len + k]) * xd[r * len + k];
    const double nrm = std::max(std::sqrt(ss), eps);
    norms[static_cast<std::size_t>(r)] = nrm;
    for (std::int64_t k = 0; k < len; ++k) out[r * len + k] = static_cast<T>(xd[r * len + k] / nrm);
  }
  auto xn = x.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn}, "l2_normalize_rows",
      [xn, norms = std::move(norms), rows, len, eps](NodeT<T>& self) {
        auto& dx = xn->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double nrm = norms[static_cast<std::size_t>(r)];
          const T* g = self.grad.data() + r * len;
          const T* xv = xn->data.data() + r * len;
          if (nrm <= eps) {
            for (std::int64_t k = 0; k < len; ++k) dx[r * len + k] += static_cast<T>(g[k] / eps);
            continue;
          }
          double dot = 0.0;
          for (std::int64_t k = 0; k < len; ++k) dot += static_cast<double>(g[k]) * xv[k];
          for (std::int64_t k = 0; k < len; ++k) {
            const double y = xv[k] / nrm;
            dx[r * len + k] += static_cast<T>((g[k] - y * dot / nrm) / nrm);
          }
        }
      });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  require_rank(a, 3, "bmm", "left operand");
  require_rank(b, 3, "bmm", "right operand");
  const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::int64_t kb = transpose_b ? b.dim(2) : b.dim(1);
  const std::int64_t p = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != batch || kb != k) {
    throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         (transpose_b ? "^T" : "") + " contraction axes disagree");
  }
  // Element of b at logical [bi, kk, pp].
  auto b_at = [=](std::int64_t bi, std::int64_t kk, std::int64_t pp) {
    return transpose_b ? (bi * p + pp) * k + kk : (bi * k + kk) * p + pp;
  };
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(static_cast<std::size_t>(batch * m * p));
  for (std::int64_t bi = 0; bi < batch; ++bi)
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < p; ++j) {
        double acc = 0.0;
        for (std::int64_t kk = 0; kk < k; ++kk)
          acc += static_cast<double>(ad[(bi * m + i) * k + kk]) * bd[b_at(bi, kk, j)];
        out[(bi * m + i) * p + j] = static_cast<T>(acc);
      }
  MacCounter::add(static_cast<std::uint64_t>(batch * m * k * p));
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(
      {batch, m, p}, std::move(out), {an, bn}, "bmm",
      [an, bn, batch, m, k, p, b_at](NodeT<T>& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          auto& da = an->ensure_grad();
          for (std::int64_t bi = 0; bi < batch; ++bi)
            for (std::int64_t i = 0; i < m; ++i)
              for (std::int64_t kk = 0; kk < k; ++kk) {
                double acc = 0.0;
                for (std::int64_t j = 0; j < p; ++j)
                  acc += static_cast<double>(g[(bi * m + i) * p + j]) * bn->data[b_at(bi, kk, j)];
                da[(bi * m + i) * k + kk] += static_cast<T>(acc);
              }
        }
        if (bn->requires_grad) {
          auto& db = bn->ensure_grad();
          for (std::int64_t bi = 0; bi < batch; ++bi)
            for (std::int64_t kk = 0; kk < k; ++kk)
              for (std::int64_t j = 0; j < p; ++j) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < m; ++i)
                  acc += static_cast<double>(an->data[(bi * m + i) * k + kk]) * g[(bi * m + i) * p + j];
                db[b_at(bi, kk, j)] += static_cast<T>(acc);
              }
        }
      });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const std::int64_t len = x.shape().back();
  const std::int64_t rows = x.numel() / len;
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* in = xd.data() + r * len;
    const double mx = *std::max_element(in, in + len);
    double z = 0.0;
    for (std::int64_t k = 0; k < len; ++k) z += std::exp(in[k] - mx);
    for (std::int64_t k = 0; k < len; ++k) out[r * len + k] = static_cast<T>(std::exp(in[k] - mx) / z);
  }
  auto xn = x.node();
  std::vector<T> y = out;
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn}, "softmax_rows",
      [xn, y = std::move(y), rows, len](NodeT<T>& self) {
        auto& dx = xn->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::int64_t k = 0; k < len; ++k)
            dot += static_cast<double>(self.grad[r * len + k]) * y[r * len + k];
          for (std::int64_t k = 0; k < len; ++k)
            dx[r * len + k] += static_cast<T>(y[r * len + k] * (self.grad[r * len + k] - dot));
        }
      });
}

template <typename T>
Tensor<T> stack_detached(std::span<const Tensor<T>> items) {
  if (items.empty()) throw UsageError("stack_detached: no tensors");
  Shape shape = items.front().shape();
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(items.front().numel()) * items.size());
  for (const auto& t : items) {
    if (t.shape() != shape) {
      throw DimensionError("stack_detached: " + shape_str(t.shape()) + " vs " + shape_str(shape));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape.insert(shape.begin(), static_cast<std::int64_t>(items.size()));
  return Tensor<T>::from_data(std::move(shape), std::move(data));
}

#define FDANET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&, \
                            Conv2dOptions);                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul_scalar(const Tensor<T>&, double);                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> group_norm(const Tensor<T>&, int, const Tensor<T>&, const Tensor<T>&,     \
                                double);                                                       \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                     \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, double);                              \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                            \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                           \
  template Tensor<T> stack_detached(std::span<const Tensor<T>>);

FDANET_INSTANTIATE_OPS(float)
FDANET_INSTANTIATE_OPS(double)

}  // namespace fdanet
