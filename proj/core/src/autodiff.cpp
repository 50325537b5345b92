#include "fdanet/autodiff.hpp"

#include <unordered_set>
#include <utility>

#include "fdanet/mac_counter.hpp"

namespace fdanet {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::int64_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

namespace {
thread_local std::uint64_t g_macs = 0;
}

std::uint64_t MacCounter::value() { return g_macs; }
void MacCounter::add(std::uint64_t macs) { g_macs += macs; }
void MacCounter::reset() { g_macs = 0; }

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  // Iterative post-order DFS; only nodes that carry grad are visited.
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
void Tape<T>::run_backward() {
  if (order_.empty()) return;
  for (auto* node : order_) {
    if (!node->is_leaf()) node->grad.clear();
  }
  auto* root = order_.back();
  root->ensure_grad()[0] += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node<T>* node = *it;
    if (node->is_leaf() || node->grad.empty() || !node->backward_fn) continue;
    node->backward_fn(*node);
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() root is not on the tape (no input requires grad)");
  }
  Tape<T>::record(loss).run_backward();
}

Tensor<double> finite_diff_grad(const std::function<double()>& f, Tensor<double>& x,
                                double step, std::span<const std::int64_t> indices) {
  auto values = x.mutable_data();
  std::vector<double> out(values.size(), 0.0);
  for (auto i : indices) {
    const double saved = values[static_cast<std::size_t>(i)];
    values[static_cast<std::size_t>(i)] = saved + step;
    const double up = f();
    values[static_cast<std::size_t>(i)] = saved - step;
    const double down = f();
    values[static_cast<std::size_t>(i)] = saved;
    out[static_cast<std::size_t>(i)] = (up - down) / (2.0 * step);
  }
  return Tensor<double>::from_data(x.shape(), std::move(out));
}

Tensor<double> finite_diff_grad(const std::function<double()>& f, Tensor<double>& x,
                                double step) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(x.numel()));
  std::iota(all.begin(), all.end(), std::int64_t{0});
  return finite_diff_grad(f, x, step, all);
}

template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace fdanet
