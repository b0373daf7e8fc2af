#pragma once

// Wengert-list reverse-mode tape. Ops record a backward closure while a tape
// is active; backward() replays the closures in reverse recording order,
// which is a valid reverse topological order, then releases the graph.
// A second backward without fresh forward work is rejected.
//
// One tape is single-threaded; independent tapes may live on independent
// threads (the active-tape pointer is thread-local).

#include "rppg/tensor.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rppg {

template <class S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& t) : tape_(&t), prev_(active_) { active_ = tape_; }
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* tape_;
    Tape* prev_;
  };

  [[nodiscard]] Scope activate() { return Scope(*this); }

  static Tape* active() { return active_; }

  void record(const char* op, Tensor<S> output, std::function<void()> backward) {
    steps_.push_back(Step{op, output.node(), std::move(backward)});
    replayed_ = false;
  }

  std::size_t size() const { return steps_.size(); }

  // Scans recorded outputs in forward order; returns "op(name)" of the first
  // tensor holding a NaN/Inf. Used for the non-finite-loss diagnostic.
  std::optional<std::string> first_non_finite() const {
    for (const Step& s : steps_) {
      if (!s.output->value.isFinite().all()) {
        std::string where = s.op;
        if (!s.output->name.empty()) where += " '" + s.output->name + "'";
        return where;
      }
    }
    return std::nullopt;
  }

  void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (steps_.empty()) {
      throw TapeError(replayed_ ? "backward: tape already consumed; run a new forward pass"
                                : "backward: loss was not produced by ops recorded on this tape");
    }
    if (!loss.requires_grad())
      throw ContractError("backward: loss does not depend on any differentiable input");
    const_cast<Tensor<S>&>(loss).grad()[0] = S(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->backward();
    steps_.clear();
    replayed_ = true;
  }

 private:
  struct Step {
    const char* op;
    std::shared_ptr<detail::TensorNode<S>> output;
    std::function<void()> backward;
  };

  std::vector<Step> steps_;
  bool replayed_ = false;

  static thread_local Tape* active_;
};

template <class S>
thread_local Tape<S>* Tape<S>::active_ = nullptr;

}  // namespace rppg
