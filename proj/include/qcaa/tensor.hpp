#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qcaa/errors.hpp"

namespace qcaa {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major float64 array that may take part in a reverse-mode graph.
///
/// Tensor is a shared handle: copies alias the same storage, which is what the
/// graph relies on to route gradients back to parameters. Use clone() for an
/// independent copy.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->data.assign(numel(shape), 0.0);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (values.size() != numel(shape)) {
      throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{1}, {value}, requires_grad);
  }

  bool defined() const noexcept { return impl_ != nullptr; }
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const Shape& shape() const { return checked().shape; }
  std::size_t rank() const { return checked().shape.size(); }
  std::size_t dim(std::size_t axis) const {
    const auto& s = checked().shape;
    if (axis >= s.size()) {
      throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
  }
  std::size_t size() const { return checked().data.size(); }

  std::span<double> data() { return checked().data; }
  std::span<const double> data() const { return checked().data; }
  std::vector<double> values() const { return checked().data; }

  double item() const {
    const auto& d = checked().data;
    if (d.size() != 1) {
      throw ContractError("item() needs a single-element tensor, got shape " + to_string(shape()));
    }
    return d[0];
  }

  bool requires_grad() const { return checked().requires_grad; }
  void set_requires_grad(bool flag) { checked().requires_grad = flag; }

  bool has_grad() const { return !checked().grad.empty(); }

  /// Read-only gradient; empty when no gradient has been accumulated.
  std::span<const double> grad() const { return checked().grad; }

  /// Gradient buffer, allocated as zeros on first use. Callable on const
  /// handles: the gradient belongs to the shared storage, not the handle.
  std::span<double> mutable_grad() const {
    auto& impl = checked();
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
    return impl.grad;
  }

  void zero_grad() const {
    auto& g = checked().grad;
    std::fill(g.begin(), g.end(), 0.0);
  }
  void clear_grad() const { checked().grad.clear(); }

  Tensor clone() const {
    return Tensor(checked().shape, checked().data, checked().requires_grad);
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  Impl& checked() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

/// Tape of executed operations for one forward/backward step.
///
/// Nodes are appended in execution order, so the record is already
/// topologically sorted; backward() walks it in reverse. A graph supports a
/// single backward pass and must be reset() before the next step.
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  void record(Tensor output, std::vector<Tensor> inputs, BackwardFn fn) {
    if (backward_done_) {
      throw ContractError("graph already ran backward; reset() it before recording new operations");
    }
    nodes_.push_back(Node{std::move(output), std::move(inputs), std::move(fn)});
  }

  void backward(const Tensor& loss) {
    if (backward_done_) throw ContractError("backward() called twice without reset()");
    if (loss.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    backward_done_ = true;
    if (!loss.requires_grad()) return;
    Tensor seed = loss;
    seed.mutable_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output.has_grad()) it->fn();
    }
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  const std::vector<Tensor>& inputs_of(std::size_t node) const { return nodes_.at(node).inputs; }
  const Tensor& output_of(std::size_t node) const { return nodes_.at(node).output; }

 private:
  struct Node {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace qcaa
