#pragma once

// Finite-difference verification of every differentiable op plus the full
// model + shift-weighted-loss composite. Shared by the gradcheck CLI command
// and the acceptance suite.

#include "rppg/gradcheck.hpp"
#include "rppg/losses.hpp"
#include "rppg/model.hpp"

#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace rppg {

namespace detail {

template <class S>
Tensor<S> gc_random(Shape shape, Rng& rng, bool grad = true) {
  Tensor<S> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.array()[i] = static_cast<S>(rng.uniform(-1.0, 1.0));
  if (grad) t.set_requires_grad(true);
  return t;
}

}  // namespace detail

struct OpCheckResult {
  std::string op;
  bool pass = true;
  double max_rel_err = 0.0;
};

// Runs every op check over `seeds` random seeds. Returns one entry per op.
template <class S>
std::vector<OpCheckResult> run_gradcheck_suite(int seeds, std::uint64_t base_seed) {
  using detail::gc_random;
  std::vector<OpCheckResult> results;

  const auto run = [&](const std::string& name,
                       const std::function<GradCheckReport(std::uint64_t)>& once) {
    OpCheckResult r;
    r.op = name;
    for (int s = 0; s < seeds; ++s) {
      const GradCheckReport rep = once(derive_seed(base_seed, static_cast<std::uint64_t>(s)));
      r.pass = r.pass && rep.pass;
      r.max_rel_err = std::max(r.max_rel_err, rep.max_rel_err);
    }
    results.push_back(std::move(r));
  };

  run("conv2d", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({2, 2, 5, 5}, rng);
    auto w = gc_random<S>({3, 2, 3, 3}, rng);
    auto b = gc_random<S>({3}, rng);
    auto t = gc_random<S>({2, 3, 5, 5}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(conv2d(x, w, b), t); }, {x, w, b});
  });
  run("conv1d_fixed", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({3, 9}, rng);
    auto k = make_dtc_kernel<S>();
    auto t = gc_random<S>({3, 9}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(conv1d_fixed(x, k), t); }, {x});
  });
  run("tanh", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({7}, rng);
    auto t = gc_random<S>({7}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(rppg::tanh(x), t); }, {x});
  });
  run("batchnorm2d(train)", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({3, 2, 3, 3}, rng);
    auto gm = gc_random<S>({2}, rng);
    auto bt = gc_random<S>({2}, rng);
    auto t = gc_random<S>({3, 2, 3, 3}, rng, false);
    return check_gradients<S>(
        [&] {
          ArrayX<S> rm = ArrayX<S>::Zero(2), rv = ArrayX<S>::Ones(2);
          return mse_reduce(batchnorm2d(x, gm, bt, rm, rv, Mode::Train), t);
        },
        {x, gm, bt});
  });
  run("batchnorm2d(infer)", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({2, 2, 3, 3}, rng);
    auto gm = gc_random<S>({2}, rng);
    auto bt = gc_random<S>({2}, rng);
    auto t = gc_random<S>({2, 2, 3, 3}, rng, false);
    return check_gradients<S>(
        [&] {
          ArrayX<S> rm = ArrayX<S>::Zero(2), rv = ArrayX<S>::Ones(2);
          return mse_reduce(batchnorm2d(x, gm, bt, rm, rv, Mode::Infer), t);
        },
        {x, gm, bt});
  });
  run("avgpool2d", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({2, 2, 4, 6}, rng);
    auto t = gc_random<S>({2, 2, 2, 3}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(avgpool2d(x), t); }, {x});
  });
  run("spatial_mean", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({3, 2, 2, 2}, rng);
    auto t = gc_random<S>({2, 3}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(spatial_mean(x), t); }, {x});
  });
  run("concat_channels", [](std::uint64_t s) {
    Rng rng(s);
    auto a = gc_random<S>({2, 5}, rng);
    auto b = gc_random<S>({3, 5}, rng);
    auto t = gc_random<S>({5, 5}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(concat_channels<S>({a, b}), t); }, {a, b});
  });
  run("conv1x1", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({4, 6}, rng);
    auto w = gc_random<S>({2, 4}, rng);
    auto b = gc_random<S>({2}, rng);
    auto t = gc_random<S>({2, 6}, rng, false);
    return check_gradients<S>([&] { return mse_reduce(conv1x1(x, w, b), t); }, {x, w, b});
  });
  run("reshape+affine", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({2, 3}, rng);
    auto t = gc_random<S>({6}, rng, false);
    return check_gradients<S>(
        [&] { return mse_reduce(affine(reshape(x, {6}), S(1.5), S(-0.25)), t); }, {x});
  });
  run("mse_reduce", [](std::uint64_t s) {
    Rng rng(s);
    auto a = gc_random<S>({9}, rng);
    auto b = gc_random<S>({9}, rng);
    return check_gradients<S>([&] { return mse_reduce(a, b); }, {a, b});
  });
  run("softmax", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({11}, rng);
    auto v = gc_random<S>({11}, rng, false);
    return check_gradients<S>([&] { return dot(softmax(x), v); }, {x});
  });
  run("standardize", [](std::uint64_t s) {
    Rng rng(s);
    auto x = gc_random<S>({9}, rng);
    auto v = gc_random<S>({9}, rng, false);
    return check_gradients<S>([&] { return dot(standardize(x), v); }, {x});
  });
  run("dot", [](std::uint64_t s) {
    Rng rng(s);
    auto a = gc_random<S>({8}, rng);
    auto b = gc_random<S>({8}, rng);
    return check_gradients<S>([&] { return dot(a, b); }, {a, b});
  });
  run("stack_scalars+max_reduce", [](std::uint64_t s) {
    Rng rng(s);
    auto a = gc_random<S>({1}, rng);
    auto b = gc_random<S>({1}, rng);
    auto c = gc_random<S>({1}, rng);
    return check_gradients<S>([&] { return max_reduce(stack_scalars<S>({a, b, c})); }, {a, b, c});
  });
  run("npc_loss", [](std::uint64_t s) {
    Rng rng(s);
    auto p = gc_random<S>({24}, rng);
    auto y = gc_random<S>({24}, rng, false);
    return check_gradients<S>([&] { return npc_loss(p, y); }, {p});
  });
  run("mcc_loss", [](std::uint64_t s) {
    Rng rng(s);
    auto p = gc_random<S>({24}, rng);
    auto y = gc_random<S>({24}, rng, false);
    return check_gradients<S>([&] { return mcc_loss(p, y, 5); }, {p});
  });
  run("talos_loss", [](std::uint64_t s) {
    Rng rng(s);
    auto p = gc_random<S>({24}, rng);
    auto y = gc_random<S>({24}, rng, false);
    auto dist = ShiftDistribution<S>::make("s", 10.0);
    for (Index i = 0; i < dist.logits.size(); ++i)
      dist.logits.array()[i] = static_cast<S>(rng.uniform(-1.0, 1.0));
    return check_gradients<S>([&] { return talos_loss(p, y, dist); }, {p, dist.logits});
  });
  run("model+talos composite", [](std::uint64_t s) {
    Rng rng(s);
    TdmModel<S> model(TdmArch{2, 3, 2, 8, 8}, s);
    Tensor<S> video = gc_random<S>({8, 3, 8, 8}, rng, false);
    video.array() = (video.array() + S(1)) * S(0.5);
    auto dist = ShiftDistribution<S>::make("s", 8.0);
    for (Index i = 0; i < dist.logits.size(); ++i)
      dist.logits.array()[i] = static_cast<S>(rng.uniform(-0.5, 0.5));
    Tensor<S> target = gc_random<S>({8}, rng, false);
    std::vector<Tensor<S>> leaves = model.parameters();
    leaves.push_back(dist.logits);
    const auto bn1m = model.bn1.running_mean, bn1v = model.bn1.running_var;
    const auto bn2m = model.bn2.running_mean, bn2v = model.bn2.running_var;
    return check_gradients<S>(
        [&] {
          model.bn1.running_mean = bn1m;
          model.bn1.running_var = bn1v;
          model.bn2.running_mean = bn2m;
          model.bn2.running_var = bn2v;
          return talos_loss(model.forward(video, Mode::Train), target, dist);
        },
        leaves);
  });

  return results;
}

}  // namespace rppg
