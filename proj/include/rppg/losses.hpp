#pragma once

// Training objectives: MSE, negative Pearson correlation, maximum
// cross-correlation over a bounded lag window, and the shift-weighted MSE
// with a learnable per-subject distribution over integer temporal offsets.

#include "rppg/ops.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace rppg {

// Translate y by k frames: out[t] = y[t-k], zeros filling vacated positions.
// Positive k delays the signal (content moves right). |k| beyond max_abs_k is
// rejected.
template <class S>
ArrayX<S> shift_reference(const ArrayX<S>& y, int k, int max_abs_k) {
  if (std::abs(k) > max_abs_k)
    throw RangeError("shift_reference: |" + std::to_string(k) + "| exceeds max shift " +
                     std::to_string(max_abs_k));
  const Index T = y.size();
  ArrayX<S> out = ArrayX<S>::Zero(T);
  for (Index t = 0; t < T; ++t) {
    const Index s = t - k;
    if (s >= 0 && s < T) out[t] = y[s];
  }
  return out;
}

// Per-subject distribution over candidate temporal offsets. Logits are a
// trainable leaf; probabilities are recomputed from them on every use and
// never stored.
template <class S>
struct ShiftDistribution {
  std::string subject_id;
  Tensor<S> logits;               // [K]
  std::vector<int> shift_values;  // candidate offsets, ascending

  static ShiftDistribution make(std::string subject, double fs, bool even_only = false) {
    const int half = static_cast<int>(std::floor(fs / 2.0));
    std::vector<int> values;
    for (int k = -half; k <= half; ++k)
      if (!even_only || k % 2 == 0) values.push_back(k);
    ShiftDistribution d;
    d.subject_id = std::move(subject);
    d.shift_values = std::move(values);
    d.logits = Tensor<S>::zeros({static_cast<Index>(d.shift_values.size())}, "theta." + d.subject_id);
    d.logits.set_requires_grad(true);
    return d;
  }

  int max_shift() const { return shift_values.back(); }

  ArrayX<S> probabilities() const {
    ArrayX<S> p = (logits.array() - logits.array().maxCoeff()).exp();
    p /= p.sum();
    return p;
  }

  int argmax_shift() const {
    Index arg = 0;
    logits.array().maxCoeff(&arg);
    return shift_values[static_cast<std::size_t>(arg)];
  }
};

template <class S>
class ShiftRegistry {
 public:
  ShiftDistribution<S>& add(const std::string& subject, double fs, bool even_only = false) {
    auto it = by_subject_.find(subject);
    if (it == by_subject_.end())
      it = by_subject_.emplace(subject, ShiftDistribution<S>::make(subject, fs, even_only)).first;
    return it->second;
  }

  ShiftDistribution<S>& at(const std::string& subject) {
    auto it = by_subject_.find(subject);
    if (it == by_subject_.end())
      throw MissingSubjectError("shift registry: unknown subject '" + subject + "'");
    return it->second;
  }

  bool contains(const std::string& subject) const { return by_subject_.count(subject) != 0; }
  std::size_t size() const { return by_subject_.size(); }
  const std::map<std::string, ShiftDistribution<S>>& entries() const { return by_subject_; }

  std::vector<Tensor<S>> logit_parameters() {
    std::vector<Tensor<S>> params;
    params.reserve(by_subject_.size());
    for (auto& [_, dist] : by_subject_) params.push_back(dist.logits);
    return params;
  }

  // Text table: one header row with the candidate shifts, then one row of
  // probabilities per subject.
  void export_table(std::ostream& os) const {
    os << "subject";
    if (!by_subject_.empty())
      for (int k : by_subject_.begin()->second.shift_values) os << '\t' << k;
    os << '\n';
    os << std::setprecision(9);
    for (const auto& [subject, dist] : by_subject_) {
      os << subject;
      const ArrayX<S> p = dist.probabilities();
      for (Index i = 0; i < p.size(); ++i) os << '\t' << static_cast<double>(p[i]);
      os << '\n';
    }
  }

 private:
  std::map<std::string, ShiftDistribution<S>> by_subject_;  // ordered for determinism
};

namespace detail {

template <class S>
void require_signal_pair(const Tensor<S>& pred, const Tensor<S>& ref, const char* op) {
  if (pred.rank() != 1 || ref.rank() != 1 || pred.size() != ref.size())
    throw ShapeError(std::string(op) + ": signals must be equal-length 1-d tensors, got " +
                     shape_str(pred.shape()) + " vs " + shape_str(ref.shape()));
}

template <class S>
void require_nondegenerate(const Tensor<S>& x, const char* op) {
  const S mu = x.array().mean();
  if (!((x.array() - mu).square().mean() > S(0)))
    throw DegenerateSignalError(std::string(op) + ": signal has zero variance");
}

}  // namespace detail

template <class S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& ref) {
  detail::require_signal_pair(pred, ref, "mse_loss");
  return mse_reduce(pred, ref);
}

// 1 - Pearson(pred, ref). Signals are used as-is, without prior
// normalization of their range.
template <class S>
Tensor<S> npc_loss(const Tensor<S>& pred, const Tensor<S>& ref) {
  detail::require_signal_pair(pred, ref, "npc_loss");
  detail::require_nondegenerate(pred, "npc_loss");
  detail::require_nondegenerate(ref, "npc_loss");
  Tensor<S> r = dot(standardize(pred), standardize(ref));
  return affine(r, S(-1) / S(pred.size()), S(1));
}

// Negated maximum of the normalized cross-correlation between the
// standardized signals over lags |l| <= max_lag. Zero-padded lagging keeps
// length T; the reference is treated as a constant.
template <class S>
Tensor<S> mcc_loss(const Tensor<S>& pred, const Tensor<S>& ref, int max_lag) {
  detail::require_signal_pair(pred, ref, "mcc_loss");
  detail::require_nondegenerate(pred, "mcc_loss");
  detail::require_nondegenerate(ref, "mcc_loss");
  if (max_lag < 0) throw RangeError("mcc_loss: max_lag must be >= 0");

  Tensor<S> ps = standardize(pred);
  const S mu = ref.array().mean();
  ArrayX<S> rs = ref.array() - mu;
  rs /= std::sqrt(rs.square().mean());

  std::vector<Tensor<S>> corrs;
  corrs.reserve(static_cast<std::size_t>(2 * max_lag + 1));
  for (int l = -max_lag; l <= max_lag; ++l) {
    Tensor<S> shifted = Tensor<S>::from_array(ref.shape(), shift_reference<S>(rs, l, max_lag));
    corrs.push_back(dot(ps, shifted));
  }
  Tensor<S> best = max_reduce(stack_scalars(corrs));
  return affine(best, S(-1) / S(pred.size()), S(0));
}

// Shift-weighted MSE: sum over candidate offsets k of MSE(pred, ref shifted
// by k) times the subject's learned probability of k. Differentiable with
// respect to the prediction and the subject's logits.
template <class S>
Tensor<S> talos_loss(const Tensor<S>& pred, const Tensor<S>& ref, ShiftDistribution<S>& dist) {
  detail::require_signal_pair(pred, ref, "talos_loss");
  const int max_shift = dist.max_shift();
  std::vector<Tensor<S>> mses;
  mses.reserve(dist.shift_values.size());
  for (int k : dist.shift_values) {
    Tensor<S> yk = Tensor<S>::from_array(ref.shape(), shift_reference<S>(ref.array(), k, max_shift));
    mses.push_back(mse_reduce(pred, yk));
  }
  return dot(stack_scalars(mses), softmax(dist.logits));
}

}  // namespace rppg
