#pragma once

#include <optional>

#include "fdanet/tensor.hpp"

namespace fdanet {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// 2-D cross-correlation, NCHW input, weight [Cout, Cin/groups, kh, kw].
/// groups == Cin gives a depthwise conv, a 1x1 kernel a pointwise one.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv2dOptions opts = {});

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product of equal-shape tensors.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// Multiply by a single-element tensor (e.g. a learnable temperature).
template <typename T>
Tensor<T> scale(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, double c);

/// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Normalizes over C at each (n, h, w), then per-channel affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-6);

/// Normalizes over (C/groups, H, W) per (n, group), then per-channel affine.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int num_groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5);

/// Mean absolute error; the subgradient at zero is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Concatenates two NCHW tensors along C.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// [N, C*r*r, H, W] -> [N, C, H*r, W*r].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);

/// [N, C, H*r, W*r] -> [N, C*r*r, H, W]; inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

/// Same buffer, new shape of equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Divides each last-axis row by max(||row||_2, eps).
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, double eps = 1e-12);

/// Batched product of [B, M, K] with [B, K, P], or with [B, P, K]^T when
/// transpose_b is set.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Softmax along the last axis.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Stacks equal-shape tensors along a new leading axis (no history).
template <typename T>
Tensor<T> stack_detached(std::span<const Tensor<T>> items);

}  // namespace fdanet
