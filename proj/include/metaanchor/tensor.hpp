// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with a small reverse-mode autograd tape.
//
// A Tensor is a cheap handle to shared storage. Operations that receive at
// least one input with requires_grad() record a backward closure on their
// output; backward() walks that graph in reverse topological order. Leaf
// tensors accumulate gradients across calls, interior nodes are reset at the
// start of every backward().
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace metaanchor {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  // Called during backward with the output node; must push gradients into
  // the parents that require them.
  using BackwardFn = std::function<void(const detail::Node& self)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds a non-leaf tensor. `backward` is only retained when grad mode is
  // on and some parent requires a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access; intended for parameters and freshly built inputs.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  // Empty span if no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, no history, no gradient.
  Tensor detach() const;
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct detail::Node;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  Tensor::BackwardFn backward;

  // Allocates (zeroed) on first use.
  std::span<double> grad_buffer();
  // Gradient of this node as seen by a backward closure.
  std::span<const double> upstream() const { return grad; }
};

// Accumulation target for a parent, or an empty span when the parent does not
// take gradients.
std::span<double> grad_sink(const Tensor& parent);

}  // namespace detail

// Runs reverse-mode differentiation from a scalar.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace metaanchor
