#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fdanet/tensor.hpp"

namespace fdanet {

/// Topologically ordered record of the operations reachable from a root.
/// Every node appears once and after all of its inputs.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node<T>*>& order() const { return order_; }

  /// Seeds d(root)/d(root) = 1 and runs every backward rule once, in reverse.
  void run_backward();

 private:
  std::vector<detail::Node<T>*> order_;
};

/// Populates grads of every requires_grad leaf reachable from `loss`.
/// Leaf grads accumulate across calls; intermediate grads are reset per call.
template <typename T>
void backward(const Tensor<T>& loss);

/// Central-difference gradient of `f` with respect to the values of `x`.
/// `x` is perturbed in place and restored; `f` must read it on every call.
Tensor<double> finite_diff_grad(const std::function<double()>& f, Tensor<double>& x,
                                double step);

/// Same, restricted to the listed flat indices (others left zero).
Tensor<double> finite_diff_grad(const std::function<double()>& f, Tensor<double>& x,
                                double step, std::span<const std::int64_t> indices);

}  // namespace fdanet
