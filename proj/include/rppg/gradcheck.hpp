#pragma once

// Central finite-difference verification of tape gradients. The numeric side
// uses forward evaluations only, so it is independent of every backward rule
// it checks. The forward callable must be a pure function of the leaves'
// current values; mutable state (e.g. batch-norm running statistics) must be
// reset inside the callable.

#include "rppg/ops.hpp"

#include <string>
#include <vector>

namespace rppg {

struct GradCheckReport {
  bool pass = true;
  double max_abs_diff = 0.0;
  double max_rel_err = 0.0;
  long long elements = 0;
  std::string worst;  // leaf/element of the largest relative error
};

template <class S, class F>
GradCheckReport check_gradients(F&& forward, std::vector<Tensor<S>> leaves, S step = S(1e-5),
                                S rel_tol = S(1e-4), S abs_floor = S(1e-7)) {
  for (Tensor<S>& leaf : leaves) {
    require(leaf.requires_grad(), "check_gradients: leaf '" + leaf.name() + "' does not carry a gradient");
    leaf.zero_grad();
  }

  // Analytic pass.
  std::vector<ArrayX<S>> analytic;
  {
    Tape<S> tape;
    auto scope = tape.activate();
    Tensor<S> loss = forward();
    tape.backward(loss);
  }
  analytic.reserve(leaves.size());
  for (Tensor<S>& leaf : leaves) analytic.push_back(leaf.grad());

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<S>& leaf = leaves[li];
    for (Index i = 0; i < leaf.size(); ++i) {
      const S saved = leaf.array()[i];
      leaf.array()[i] = saved + step;
      const S up = forward().item();
      leaf.array()[i] = saved - step;
      const S down = forward().item();
      leaf.array()[i] = saved;

      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * static_cast<double>(step));
      const double a = static_cast<double>(analytic[li][i]);
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel = diff / std::max(scale, static_cast<double>(abs_floor));
      ++report.elements;
      report.max_abs_diff = std::max(report.max_abs_diff, diff);
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = leaf.name() + "[" + std::to_string(i) + "]";
      }
      if (diff > static_cast<double>(abs_floor) + static_cast<double>(rel_tol) * scale) report.pass = false;
    }
  }
  return report;
}

}  // namespace rppg
