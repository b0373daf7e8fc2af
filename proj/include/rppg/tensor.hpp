#pragma once

// Dense n-dimensional tensor with optional gradient buffer. A Tensor is a
// shared handle to its node, so copies alias the same storage; gradients
// accumulated through any handle are visible through all of them. Use
// clone() for a deep copy.

#include "rppg/core.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace rppg {

namespace detail {

template <class S>
struct TensorNode {
  Shape shape;
  ArrayX<S> value;
  ArrayX<S> grad;  // sized like value iff requires_grad
  bool requires_grad = false;
  std::string name;
};

}  // namespace detail

template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  explicit Tensor(Shape shape, std::string name = {}) {
    const Index n = numel(shape);
    node_ = std::make_shared<detail::TensorNode<S>>();
    node_->shape = std::move(shape);
    node_->value = ArrayX<S>::Zero(n);
    node_->name = std::move(name);
  }

  static Tensor zeros(Shape shape, std::string name = {}) {
    return Tensor(std::move(shape), std::move(name));
  }

  static Tensor full(Shape shape, S fill, std::string name = {}) {
    Tensor t(std::move(shape), std::move(name));
    t.array().setConstant(fill);
    return t;
  }

  static Tensor scalar(S v, std::string name = {}) {
    return full({1}, v, std::move(name));
  }

  static Tensor from_array(Shape shape, ArrayX<S> data, std::string name = {}) {
    if (numel(shape) != data.size())
      throw ShapeError("from_array: " + shape_str(shape) + " does not hold " +
                       std::to_string(data.size()) + " values");
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->name = std::move(name);
    return t;
  }

  static Tensor from_vector(Shape shape, const std::vector<S>& data, std::string name = {}) {
    return from_array(std::move(shape), Eigen::Map<const ArrayX<S>>(data.data(), static_cast<Index>(data.size())),
                      std::move(name));
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Index size() const { return node_->value.size(); }

  ArrayX<S>& array() { return node_->value; }
  const ArrayX<S>& array() const { return node_->value; }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on)
      node_->grad = ArrayX<S>::Zero(node_->value.size());
    else
      node_->grad.resize(0);
    return *this;
  }

  ArrayX<S>& grad() {
    if (!requires_grad()) throw ContractError("tensor '" + name() + "' has no gradient buffer");
    return node_->grad;
  }
  const ArrayX<S>& grad() const {
    if (!requires_grad()) throw ContractError("tensor '" + name() + "' has no gradient buffer");
    return node_->grad;
  }

  void zero_grad() {
    if (requires_grad()) node_->grad.setZero();
  }

  const std::string& name() const {
    static const std::string anon;
    return node_ ? node_->name : anon;
  }
  Tensor& set_name(std::string n) {
    node_->name = std::move(n);
    return *this;
  }

  S item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  // Deep copy; the clone is a detached leaf (no grad buffer unless re-enabled).
  Tensor clone() const {
    Tensor t = from_array(shape(), node_->value, node_->name);
    return t;
  }

  bool all_finite() const { return node_->value.isFinite().all(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  std::shared_ptr<detail::TensorNode<S>> node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode<S>> node_;
};

template <class S>
bool bitwise_equal(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(S) * static_cast<std::size_t>(a.size())) == 0;
}

// Flat-offset helpers for the 4-d [N,C,H,W] and 2-d [C,T] layouts the ops use.
inline Index offset4(Index n, Index c, Index h, Index w, Index C, Index H, Index W) {
  return ((n * C + c) * H + h) * W + w;
}
inline Index offset2(Index c, Index t, Index T) { return c * T + t; }

}  // namespace rppg
