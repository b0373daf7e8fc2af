#pragma once

// Training loop: Adadelta over the model parameters and, for the
// shift-adaptive loss, a plain SGD optimizer over the per-subject shift
// logits. Both step once per batch from a single backward pass; gradients
// accumulate across the clips of a batch.

#include "rppg/data_io.hpp"
#include "rppg/losses.hpp"
#include "rppg/model.hpp"
#include "rppg/optim.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace rppg {

enum class LossKind { Mse, Npc, Mcc, Talos };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::Npc: return "npc";
    case LossKind::Mcc: return "mcc";
    case LossKind::Talos: return "talos";
  }
  return "?";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "npc") return LossKind::Npc;
  if (s == "mcc") return LossKind::Mcc;
  if (s == "talos") return LossKind::Talos;
  throw ValidationError("unknown loss '" + s + "' (expected mse|npc|mcc|talos)");
}

struct TrainConfig {
  TdmArch arch;
  LossKind loss = LossKind::Mse;
  int epochs = 50;
  int batch_size = 4;
  double adadelta_rho = 0.9;
  double adadelta_eps = 1e-6;
  double adadelta_lr = 1.0;
  double sgd_lr = 0.01;  // shift logits, talos only
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool even_shifts_only = false;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

template <class S>
struct TrainResult {
  TdmModel<S> model;
  ShiftRegistry<S> registry;  // populated only for the talos loss
  std::vector<EpochLog> log;
};

template <class S>
Tensor<S> compute_loss(const TrainConfig& cfg, const Tensor<S>& pred, const Clip<S>& clip,
                       ShiftRegistry<S>& registry) {
  Tensor<S> target = Tensor<S>::from_array({clip.target.size()},
                                           clip.target.template cast<S>().eval(), "target");
  switch (cfg.loss) {
    case LossKind::Mse: return mse_loss(pred, target);
    case LossKind::Npc: return npc_loss(pred, target);
    case LossKind::Mcc: return mcc_loss(pred, target, static_cast<int>(std::floor(clip.fps / 2.0)));
    case LossKind::Talos: return talos_loss(pred, target, registry.at(clip.subject_id));
  }
  throw ContractError("compute_loss: unreachable");
}

template <class S>
TrainResult<S> train(const TrainConfig& cfg, const std::vector<Clip<S>>& clips) {
  if (clips.empty()) throw ContractError("train: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw ValidationError("train: bad epochs/batch_size");

  TrainResult<S> result{TdmModel<S>(cfg.arch, cfg.seed), {}, {}};
  TdmModel<S>& model = result.model;
  ShiftRegistry<S>& registry = result.registry;
  if (cfg.loss == LossKind::Talos)
    for (const Clip<S>& c : clips) registry.add(c.subject_id, c.fps, cfg.even_shifts_only);

  Adadelta<S> model_opt(model.parameters(), static_cast<S>(cfg.adadelta_rho),
                        static_cast<S>(cfg.adadelta_eps), static_cast<S>(cfg.adadelta_lr));
  Sgd<S> theta_opt(registry.logit_parameters(), static_cast<S>(cfg.sgd_lr));

  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) Rng(derive_seed(cfg.seed, 0x10000u + static_cast<std::uint64_t>(epoch))).shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      model_opt.zero_grad();
      theta_opt.zero_grad();
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = b; i < end; ++i) {
        const Clip<S>& clip = clips[order[i]];
        Tape<S> tape;
        auto scope = tape.activate();
        Tensor<S> pred = model.forward(clip.video, Mode::Train);
        Tensor<S> loss = compute_loss(cfg, pred, clip, registry);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) {
          const auto culprit = tape.first_non_finite();
          throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                      "; first non-finite tensor: " + culprit.value_or("loss"));
        }
        epoch_loss += lv;
        tape.backward(loss);
      }
      model_opt.step();
      if (cfg.loss == LossKind::Talos) theta_opt.step();
    }

    const auto t1 = std::chrono::steady_clock::now();
    result.log.push_back(EpochLog{
        epoch, epoch_loss / static_cast<double>(clips.size()), cfg.adadelta_lr,
        std::chrono::duration<double, std::milli>(t1 - t0).count()});
  }
  return result;
}

}  // namespace rppg
