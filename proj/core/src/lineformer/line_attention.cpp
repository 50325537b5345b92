#include "fdanet/lineformer/line_attention.hpp"

#include <algorithm>
#include <string>

#include "fdanet/lineformer/line_buffer.hpp"
#include "fdanet/mac_counter.hpp"

namespace fdanet::lineformer {

const char* to_string(AttentionStrategy s) {
  switch (s) {
    case AttentionStrategy::naive: return "naive";
    case AttentionStrategy::linear: return "linear";
    case AttentionStrategy::streaming: return "streaming";
  }
  return "?";
}

AttentionStrategy attention_strategy_from_string(const std::string& s) {
  if (s == "naive") return AttentionStrategy::naive;
  if (s == "linear") return AttentionStrategy::linear;
  if (s == "streaming") return AttentionStrategy::streaming;
  throw ConfigError("unknown attention strategy '" + s + "' (naive|linear|streaming)");
}

void validate_local_height(int local_height) {
  if (local_height <= 0 || local_height % 2 == 0) {
    throw ConfigError("local height h=" + std::to_string(local_height) +
                      " must be a positive odd integer");
  }
}

void validate_local_height(int local_height, std::int64_t height) {
  if (local_height > 0 && local_height >= height) return;
  validate_local_height(local_height);
}

std::int64_t window_half(int local_height, std::int64_t height) {
  return local_height >= height ? height - 1 : (local_height - 1) / 2;
}

RowWindow row_window(std::int64_t row, std::int64_t height, int local_height) {
  const std::int64_t half = window_half(local_height, height);
  return {std::max<std::int64_t>(0, row - half), std::min<std::int64_t>(height - 1, row + half)};
}

template <typename T>
void row_aggregate(std::span<const T> k_row, std::span<const T> v_row, std::int64_t channels,
                   std::int64_t width, std::span<double> out) {
  for (std::int64_t a = 0; a < channels; ++a) {
    const T* ka = k_row.data() + a * width;
    for (std::int64_t b = 0; b < channels; ++b) {
      const T* vb = v_row.data() + b * width;
      double acc = 0.0;
      for (std::int64_t w = 0; w < width; ++w) acc += static_cast<double>(ka[w]) * vb[w];
      out[static_cast<std::size_t>(a * channels + b)] = acc;
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(channels * channels * width));
}

template <typename T>
void apply_aggregate(std::span<const T> q_row, std::span<const double> window_sum,
                     std::int64_t channels, std::int64_t width, std::span<T> out) {
  std::vector<double> acc(static_cast<std::size_t>(width));
  for (std::int64_t b = 0; b < channels; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int64_t a = 0; a < channels; ++a) {
      const double m = window_sum[static_cast<std::size_t>(a * channels + b)];
      const T* qa = q_row.data() + a * width;
      for (std::int64_t w = 0; w < width; ++w) acc[w] += qa[w] * m;
    }
    for (std::int64_t w = 0; w < width; ++w) out[b * width + w] = static_cast<T>(acc[w]);
  }
  MacCounter::add(static_cast<std::uint64_t>(channels * channels * width));
}

namespace {

struct Dims {
  std::int64_t n, c, h, w;
};

template <typename T>
Dims check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int local_height) {
  if (q.rank() != 4 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("line_attention: Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()) +
                         " must be equal NCHW shapes");
  }
  validate_local_height(local_height, q.dim(2));
  return {q.dim(0), q.dim(1), q.dim(2), q.dim(3)};
}

// Gathers row r of sample n as channel-major [C * W].
template <typename T>
void gather_row(std::span<const T> src, const Dims& d, std::int64_t n, std::int64_t r,
                std::vector<T>& row) {
  row.resize(static_cast<std::size_t>(d.c * d.w));
  for (std::int64_t ch = 0; ch < d.c; ++ch) {
    const T* p = src.data() + ((n * d.c + ch) * d.h + r) * d.w;
    std::copy_n(p, d.w, row.begin() + ch * d.w);
  }
}

template <typename T>
void scatter_row(std::span<const T> row, const Dims& d, std::int64_t n, std::int64_t r,
                 std::vector<T>& dst) {
  for (std::int64_t ch = 0; ch < d.c; ++ch) {
    std::copy_n(row.begin() + ch * d.w, d.w, dst.begin() + ((n * d.c + ch) * d.h + r) * d.w);
  }
}

// Per-row aggregates of (left, right) pairs: out[r][a][b] = sum_w L[a,w] R[b,w].
template <typename T, typename U>
std::vector<double> all_row_products(std::span<const T> left, std::span<const U> right,
                                     const Dims& d, std::int64_t n) {
  std::vector<double> out(static_cast<std::size_t>(d.h * d.c * d.c), 0.0);
  for (std::int64_t r = 0; r < d.h; ++r)
    for (std::int64_t a = 0; a < d.c; ++a) {
      const T* la = left.data() + ((n * d.c + a) * d.h + r) * d.w;
      for (std::int64_t b = 0; b < d.c; ++b) {
        const U* rb = right.data() + ((n * d.c + b) * d.h + r) * d.w;
        double acc = 0.0;
        for (std::int64_t w = 0; w < d.w; ++w) acc += static_cast<double>(la[w]) * rb[w];
        out[static_cast<std::size_t>((r * d.c + a) * d.c + b)] = acc;
      }
    }
  return out;
}

// Sliding window sums of per-row C x C matrices: evict rows leaving the window,
// then add rows entering it, one output row at a time.
std::vector<double> window_sums(const std::vector<double>& per_row, std::int64_t height,
                                std::int64_t c2, int local_height) {
  std::vector<double> out(static_cast<std::size_t>(height * c2));
  std::vector<double> running(static_cast<std::size_t>(c2), 0.0);
  std::int64_t lo = 0, hi = 0;  // rows [lo, hi) are in `running`
  for (std::int64_t r = 0; r < height; ++r) {
    const RowWindow win = row_window(r, height, local_height);
    for (; lo < win.first; ++lo)
      for (std::int64_t i = 0; i < c2; ++i) running[i] -= per_row[lo * c2 + i];
    for (; hi <= win.last; ++hi)
      for (std::int64_t i = 0; i < c2; ++i) running[i] += per_row[hi * c2 + i];
    std::copy(running.begin(), running.end(), out.begin() + r * c2);
  }
  return out;
}

template <typename T>
std::vector<T> linear_forward(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                              const Dims& d, int local_height) {
  std::vector<T> out(q.size());
  const std::int64_t c2 = d.c * d.c;
  std::vector<T> krow, vrow, qrow, orow(static_cast<std::size_t>(d.c * d.w));
  for (std::int64_t n = 0; n < d.n; ++n) {
    std::vector<double> aggregates(static_cast<std::size_t>(d.h * c2));
    for (std::int64_t r = 0; r < d.h; ++r) {
      gather_row(k, d, n, r, krow);
      gather_row(v, d, n, r, vrow);
      row_aggregate<T>(krow, vrow, d.c, d.w,
                       std::span<double>(aggregates).subspan(static_cast<std::size_t>(r * c2),
                                                            static_cast<std::size_t>(c2)));
    }
    const auto sums = window_sums(aggregates, d.h, c2, local_height);
    for (std::int64_t r = 0; r < d.h; ++r) {
      gather_row(q, d, n, r, qrow);
      apply_aggregate<T>(qrow,
                         std::span<const double>(sums).subspan(static_cast<std::size_t>(r * c2),
                                                              static_cast<std::size_t>(c2)),
                         d.c, d.w, orow);
      scatter_row<T>(orow, d, n, r, out);
    }
  }
  return out;
}

template <typename T>
std::vector<T> naive_forward(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                             const Dims& d, int local_height) {
  std::vector<T> out(q.size());
  std::vector<double> acc(static_cast<std::size_t>(d.c));
  std::uint64_t keys = 0;
  auto at = [&](std::span<const T> t, std::int64_t n, std::int64_t ch, std::int64_t r,
                std::int64_t w) { return static_cast<double>(t[((n * d.c + ch) * d.h + r) * d.w + w]); };
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t r = 0; r < d.h; ++r) {
      const RowWindow win = row_window(r, d.h, local_height);
      for (std::int64_t x = 0; x < d.w; ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::int64_t jr = win.first; jr <= win.last; ++jr)
          for (std::int64_t jx = 0; jx < d.w; ++jx) {
            double score = 0.0;
            for (std::int64_t a = 0; a < d.c; ++a) score += at(q, n, a, r, x) * at(k, n, a, jr, jx);
            for (std::int64_t b = 0; b < d.c; ++b) acc[b] += score * at(v, n, b, jr, jx);
            ++keys;
          }
        for (std::int64_t b = 0; b < d.c; ++b)
          out[((n * d.c + b) * d.h + r) * d.w + x] = static_cast<T>(acc[b]);
      }
    }
  MacCounter::add(keys * static_cast<std::uint64_t>(2 * d.c));
  return out;
}

template <typename T>
std::vector<T> streaming_forward(std::span<const T> q, std::span<const T> k, std::span<const T> v,
                                 const Dims& d, int local_height) {
  std::vector<T> out(q.size());
  std::vector<T> qrow, krow, vrow;
  for (std::int64_t n = 0; n < d.n; ++n) {
    LineBufferState<T> state(d.c, d.w, d.h, local_height);
    for (std::int64_t r = 0; r < d.h; ++r) {
      gather_row(q, d, n, r, qrow);
      gather_row(k, d, n, r, krow);
      gather_row(v, d, n, r, vrow);
      for (auto& row : state.push_row(r, qrow, krow, vrow)) {
        scatter_row<T>(row.values, d, n, row.index, out);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> attention_op(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                       int local_height, AttentionStrategy strategy) {
  const Dims d = check_qkv(q, k, v, local_height);
  std::vector<T> out;
  switch (strategy) {
    case AttentionStrategy::naive:
      out = naive_forward<T>(q.data(), k.data(), v.data(), d, local_height);
      break;
    case AttentionStrategy::linear:
      out = linear_forward<T>(q.data(), k.data(), v.data(), d, local_height);
      break;
    case AttentionStrategy::streaming:
      out = streaming_forward<T>(q.data(), k.data(), v.data(), d, local_height);
      break;
  }
  auto qn = q.node(), kn = k.node(), vn = v.node();
  return detail::make_result<T>(
      q.shape(), std::move(out), {qn, kn, vn}, "line_attention",
      [qn, kn, vn, d, local_height](detail::Node<T>& self) {
        const std::int64_t c2 = d.c * d.c;
        const std::span<const T> qd = qn->data, kd = kn->data, vd = vn->data;
        const std::span<const T> g = self.grad;
        for (std::int64_t n = 0; n < d.n; ++n) {
          if (qn->requires_grad) {
            // dQ[a, w] = sum_b dOut[b, w] M_r[a][b]
            const auto m = window_sums(all_row_products(kd, vd, d, n), d.h, c2, local_height);
            auto& dq = qn->ensure_grad();
            for (std::int64_t r = 0; r < d.h; ++r)
              for (std::int64_t a = 0; a < d.c; ++a)
                for (std::int64_t b = 0; b < d.c; ++b) {
                  const double mab = m[static_cast<std::size_t>(r * c2 + a * d.c + b)];
                  T* dqa = dq.data() + ((n * d.c + a) * d.h + r) * d.w;
                  const T* gb = g.data() + ((n * d.c + b) * d.h + r) * d.w;
                  for (std::int64_t w = 0; w < d.w; ++w) dqa[w] += static_cast<T>(gb[w] * mab);
                }
          }
          if (!kn->requires_grad && !vn->requires_grad) continue;
          // G_r = sum_w Q[:, w]^T dOut[:, w]; the window is symmetric, so the
          // aggregate gradient dA_r is the same window sum applied to G.
          const auto da = window_sums(all_row_products(qd, g, d, n), d.h, c2, local_height);
          for (std::int64_t r = 0; r < d.h; ++r)
            for (std::int64_t a = 0; a < d.c; ++a)
              for (std::int64_t b = 0; b < d.c; ++b) {
                const double dab = da[static_cast<std::size_t>(r * c2 + a * d.c + b)];
                const std::int64_t ka = ((n * d.c + a) * d.h + r) * d.w;
                const std::int64_t vb = ((n * d.c + b) * d.h + r) * d.w;
                if (kn->requires_grad) {
                  auto& dk = kn->ensure_grad();
                  for (std::int64_t w = 0; w < d.w; ++w)
                    dk[ka + w] += static_cast<T>(dab * vd[vb + w]);
                }
                if (vn->requires_grad) {
                  auto& dv = vn->ensure_grad();
                  for (std::int64_t w = 0; w < d.w; ++w)
                    dv[vb + w] += static_cast<T>(dab * kd[ka + w]);
                }
              }
        }
      });
}

}  // namespace

template <typename T>
Tensor<T> line_attention_naive(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               int local_height) {
  return attention_op(q, k, v, local_height, AttentionStrategy::naive);
}

template <typename T>
Tensor<T> line_attention_linear(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                int local_height) {
  return attention_op(q, k, v, local_height, AttentionStrategy::linear);
}

template <typename T>
Tensor<T> line_attention_streaming(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                   int local_height) {
  return attention_op(q, k, v, local_height, AttentionStrategy::streaming);
}

template <typename T>
Tensor<T> line_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         int local_height, AttentionStrategy strategy) {
  return attention_op(q, k, v, local_height, strategy);
}

std::uint64_t line_attention_macs(AttentionStrategy s, std::int64_t n, std::int64_t c,
                                  std::int64_t h, std::int64_t w, int local_height) {
  if (s != AttentionStrategy::naive) {
    return static_cast<std::uint64_t>(2 * n * h * w * c * c);
  }
  std::int64_t window_rows = 0;
  for (std::int64_t r = 0; r < h; ++r) {
    const RowWindow win = row_window(r, h, local_height);
    window_rows += win.last - win.first + 1;
  }
  return static_cast<std::uint64_t>(n * window_rows * w * w * 2 * c);
}

#define FDANET_INSTANTIATE_LINE_ATTENTION(T)                                                    \
  template void row_aggregate<T>(std::span<const T>, std::span<const T>, std::int64_t,          \
                                 std::int64_t, std::span<double>);                              \
  template void apply_aggregate<T>(std::span<const T>, std::span<const double>, std::int64_t,   \
                                   std::int64_t, std::span<T>);                                 \
  template Tensor<T> line_attention_naive(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          int);                                                 \
  template Tensor<T> line_attention_linear(const Tensor<T>&, const Tensor<T>&,                  \
                                           const Tensor<T>&, int);                              \
  template Tensor<T> line_attention_streaming(const Tensor<T>&, const Tensor<T>&,               \
                                              const Tensor<T>&, int);                           \
  template Tensor<T> line_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,  \
                                    AttentionStrategy);

FDANET_INSTANTIATE_LINE_ATTENTION(float)
FDANET_INSTANTIATE_LINE_ATTENTION(double)

}  // namespace fdanet::lineformer
