#pragma once

// First-order optimizers over tensor leaves. Every listed parameter must
// carry a gradient buffer; stepping a parameter without one is a contract
// error. State lives per parameter in registration order.

#include "rppg/tensor.hpp"

#include <vector>

namespace rppg {

template <class S>
class Adadelta {
 public:
  explicit Adadelta(std::vector<Tensor<S>> params, S rho = S(0.9), S eps = S(1e-6), S lr = S(1))
      : params_(std::move(params)), rho_(rho), eps_(eps), lr_(lr) {
    acc_grad_.reserve(params_.size());
    acc_delta_.reserve(params_.size());
    for (const Tensor<S>& p : params_) {
      acc_grad_.push_back(ArrayX<S>::Zero(p.size()));
      acc_delta_.push_back(ArrayX<S>::Zero(p.size()));
    }
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& p = params_[i];
      if (!p.requires_grad())
        throw ContractError("adadelta: parameter '" + p.name() + "' has no gradient");
      const ArrayX<S>& g = p.grad();
      acc_grad_[i] = rho_ * acc_grad_[i] + (S(1) - rho_) * g.square();
      const ArrayX<S> delta =
          -lr_ * g * ((acc_delta_[i] + eps_).sqrt() / (acc_grad_[i] + eps_).sqrt());
      p.array() += delta;
      acc_delta_[i] = rho_ * acc_delta_[i] + (S(1) - rho_) * delta.square();
    }
  }

  void zero_grad() {
    for (Tensor<S>& p : params_) p.zero_grad();
  }

  const std::vector<Tensor<S>>& params() const { return params_; }

 private:
  std::vector<Tensor<S>> params_;
  std::vector<ArrayX<S>> acc_grad_, acc_delta_;
  S rho_, eps_, lr_;
};

template <class S>
class Sgd {
 public:
  explicit Sgd(std::vector<Tensor<S>> params, S lr = S(0.01)) : params_(std::move(params)), lr_(lr) {}

  void step() {
    for (Tensor<S>& p : params_) {
      if (!p.requires_grad()) throw ContractError("sgd: parameter '" + p.name() + "' has no gradient");
      p.array() -= lr_ * p.grad();
    }
  }

  void zero_grad() {
    for (Tensor<S>& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor<S>> params_;
  S lr_;
};

}  // namespace rppg
