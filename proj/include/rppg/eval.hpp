#pragma once

// Evaluation protocols and metrics. Sequence protocol scores each
// fixed-length clip independently; whole-video protocol concatenates the
// per-clip predictions and reads one heart rate per video (or averages the
// per-clip readings when clip_mean_bpm is set). Heart rate is read out with
// the band-pass + periodogram pipeline on both predictions and references.

#include "rppg/data_io.hpp"
#include "rppg/dsp.hpp"
#include "rppg/model.hpp"
#include "rppg/train.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace rppg {

enum class Protocol { Sequence, WholeVideo };

inline const char* to_string(Protocol p) { return p == Protocol::Sequence ? "sequence" : "whole_video"; }

inline Protocol parse_protocol(const std::string& s) {
  if (s == "sequence") return Protocol::Sequence;
  if (s == "whole_video") return Protocol::WholeVideo;
  throw ValidationError("unknown protocol '" + s + "' (expected sequence|whole_video)");
}

struct EvalItem {
  std::string subject_id;
  int video_index = 0;
  int clip_index = -1;  // -1 for whole-video items
  double gt_bpm = 0.0;
  double pred_bpm = 0.0;
};

struct EvalReport {
  Protocol protocol = Protocol::Sequence;
  std::vector<EvalItem> items;
  double mae = 0.0;
  double rmse = 0.0;
  double pearson_r = 0.0;
  long long params = 0;
  long long macs = 0;
};

// Pearson correlation with a documented degenerate rule: if both lists are
// constant they correlate perfectly iff they are equal; if only one is
// constant the correlation is 0.
inline double pearson_metric(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ContractError("pearson_metric: length mismatch");
  const Index n = static_cast<Index>(a.size());
  const VecXd x = Eigen::Map<const VecXd>(a.data(), n);
  const VecXd y = Eigen::Map<const VecXd>(b.data(), n);
  const VecXd xc = x - x.mean(), yc = y - y.mean();
  const double sx = std::sqrt(xc.square().sum()), sy = std::sqrt(yc.square().sum());
  if (sx == 0.0 || sy == 0.0) {
    const bool equal = ((x - y).abs().maxCoeff() < 1e-12);
    return (sx == 0.0 && sy == 0.0 && equal) ? 1.0 : 0.0;
  }
  return (xc * yc).sum() / (sx * sy);
}

inline void finalize_metrics(EvalReport& r) {
  if (r.items.empty()) throw ContractError("evaluate: no items scored");
  double abs_sum = 0.0, sq_sum = 0.0;
  std::vector<double> gt, pred;
  gt.reserve(r.items.size());
  pred.reserve(r.items.size());
  for (const EvalItem& it : r.items) {
    const double d = it.pred_bpm - it.gt_bpm;
    abs_sum += std::abs(d);
    sq_sum += d * d;
    gt.push_back(it.gt_bpm);
    pred.push_back(it.pred_bpm);
  }
  const double n = static_cast<double>(r.items.size());
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.pearson_r = pearson_metric(gt, pred);
}

// One video = its ordered aligned clips.
template <class S>
struct EvalVideo {
  std::string subject_id;
  std::vector<Clip<S>> clips;
};

template <class S>
std::vector<EvalVideo<S>> to_eval_videos(const std::vector<SynthSample<S>>& samples,
                                         Index clip_len = 256) {
  std::vector<EvalVideo<S>> videos;
  for (const SynthSample<S>& s : samples) {
    EvalVideo<S> v;
    v.subject_id = s.subject_id;
    v.clips = chunk_sequences(s.video, s.groundtruth.samples, s.fps, s.subject_id, clip_len);
    if (!v.clips.empty()) videos.push_back(std::move(v));
  }
  return videos;
}

template <class S>
std::vector<Clip<S>> flatten_clips(const std::vector<EvalVideo<S>>& videos) {
  std::vector<Clip<S>> clips;
  for (const EvalVideo<S>& v : videos)
    clips.insert(clips.end(), v.clips.begin(), v.clips.end());
  return clips;
}

inline double read_bpm(const VecXd& signal, double fs) {
  const Waveform filtered = bandpass(Waveform{signal, fs});
  return estimate_hr(filtered).bpm;
}

template <class S>
EvalReport evaluate(TdmModel<S>& model, const std::vector<EvalVideo<S>>& videos, Protocol protocol,
                    bool clip_mean_bpm = false) {
  EvalReport report;
  report.protocol = protocol;
  report.params = count_params(model.arch());

  for (int vi = 0; vi < static_cast<int>(videos.size()); ++vi) {
    const EvalVideo<S>& video = videos[static_cast<std::size_t>(vi)];
    if (video.clips.empty()) continue;
    const Clip<S>& c0 = video.clips.front();
    report.macs = count_macs(model.arch(), c0.video.dim(0), c0.video.dim(2), c0.video.dim(3));

    std::vector<VecXd> preds;
    preds.reserve(video.clips.size());
    for (const Clip<S>& clip : video.clips)
      preds.push_back(model.forward(clip.video, Mode::Infer).array().template cast<double>().eval());

    if (protocol == Protocol::Sequence) {
      for (std::size_t ci = 0; ci < video.clips.size(); ++ci) {
        EvalItem item;
        item.subject_id = video.subject_id;
        item.video_index = vi;
        item.clip_index = static_cast<int>(ci);
        item.gt_bpm = read_bpm(video.clips[ci].target, video.clips[ci].fps);
        item.pred_bpm = read_bpm(preds[ci], video.clips[ci].fps);
        report.items.push_back(std::move(item));
      }
    } else {
      EvalItem item;
      item.subject_id = video.subject_id;
      item.video_index = vi;
      if (clip_mean_bpm) {
        double gt_acc = 0.0, pred_acc = 0.0;
        for (std::size_t ci = 0; ci < video.clips.size(); ++ci) {
          gt_acc += read_bpm(video.clips[ci].target, video.clips[ci].fps);
          pred_acc += read_bpm(preds[ci], video.clips[ci].fps);
        }
        item.gt_bpm = gt_acc / static_cast<double>(video.clips.size());
        item.pred_bpm = pred_acc / static_cast<double>(video.clips.size());
      } else {
        Index total = 0;
        for (const VecXd& p : preds) total += p.size();
        VecXd pred_cat(total), gt_cat(total);
        Index at = 0;
        for (std::size_t ci = 0; ci < video.clips.size(); ++ci) {
          pred_cat.segment(at, preds[ci].size()) = preds[ci];
          gt_cat.segment(at, preds[ci].size()) = video.clips[ci].target;
          at += preds[ci].size();
        }
        item.gt_bpm = read_bpm(gt_cat, c0.fps);
        item.pred_bpm = read_bpm(pred_cat, c0.fps);
      }
      report.items.push_back(std::move(item));
    }
  }
  finalize_metrics(report);
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------
inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["protocol"] = to_string(r.protocol);
  j["mae"] = r.mae;
  j["rmse"] = r.rmse;
  j["pearson_r"] = r.pearson_r;
  j["params"] = r.params;
  j["macs"] = r.macs;
  j["items"] = nlohmann::json::array();
  for (const EvalItem& it : r.items) {
    j["items"].push_back({{"subject_id", it.subject_id},
                          {"video_index", it.video_index},
                          {"clip_index", it.clip_index},
                          {"gt_bpm", it.gt_bpm},
                          {"pred_bpm", it.pred_bpm}});
  }
  return j;
}

inline void write_report_csv(std::ostream& os, const EvalReport& r) {
  os << "subject_id,video_index,clip_index,gt_bpm,pred_bpm\n";
  os.precision(10);
  for (const EvalItem& it : r.items)
    os << it.subject_id << ',' << it.video_index << ',' << it.clip_index << ',' << it.gt_bpm << ','
       << it.pred_bpm << '\n';
}

// ---------------------------------------------------------------------------
// Ablation driver: train one model per (order, loss) cell on the same cohort
// with the same seed, then score both protocols.
// ---------------------------------------------------------------------------
struct AblateCell {
  int order = 0;
  LossKind loss = LossKind::Mse;
  double seq_mae = 0, seq_rmse = 0, seq_r = 0;
  double vid_mae = 0, vid_rmse = 0, vid_r = 0;
  long long params = 0, macs = 0;
  std::uint64_t seed = 0;
};

template <class S>
AblateCell run_cell(const TrainConfig& base, const std::vector<EvalVideo<S>>& videos, int order,
                    LossKind loss) {
  TrainConfig cfg = base;
  cfg.arch.order = order;
  cfg.loss = loss;
  TrainResult<S> trained = train(cfg, flatten_clips(videos));

  AblateCell cell;
  cell.order = order;
  cell.loss = loss;
  cell.seed = cfg.seed;
  const EvalReport seq = evaluate(trained.model, videos, Protocol::Sequence);
  const EvalReport vid = evaluate(trained.model, videos, Protocol::WholeVideo);
  cell.seq_mae = seq.mae;
  cell.seq_rmse = seq.rmse;
  cell.seq_r = seq.pearson_r;
  cell.vid_mae = vid.mae;
  cell.vid_rmse = vid.rmse;
  cell.vid_r = vid.pearson_r;
  cell.params = seq.params;
  cell.macs = seq.macs;
  return cell;
}

template <class S>
std::vector<AblateCell> ablate(const TrainConfig& base, const std::vector<EvalVideo<S>>& videos,
                               const std::vector<int>& orders, const std::vector<LossKind>& losses,
                               int threads = 1) {
  struct Job {
    int order;
    LossKind loss;
  };
  std::vector<Job> jobs;
  for (int o : orders)
    for (LossKind l : losses) jobs.push_back({o, l});

  std::vector<AblateCell> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      try {
        cells[i] = run_cell(base, videos, jobs[i].order, jobs[i].loss);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  threads = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads && t < static_cast<int>(jobs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return cells;
}

inline nlohmann::json ablation_to_json(const std::vector<AblateCell>& cells) {
  nlohmann::json j = nlohmann::json::array();
  for (const AblateCell& c : cells) {
    j.push_back({{"order", c.order},
                 {"loss", to_string(c.loss)},
                 {"seq_mae", c.seq_mae},
                 {"seq_rmse", c.seq_rmse},
                 {"seq_r", c.seq_r},
                 {"vid_mae", c.vid_mae},
                 {"vid_rmse", c.vid_rmse},
                 {"vid_r", c.vid_r},
                 {"params", c.params},
                 {"macs", c.macs},
                 {"seed", c.seed}});
  }
  return j;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblateCell>& cells) {
  os << "order,loss,seq_mae,seq_rmse,seq_r,vid_mae,vid_rmse,vid_r,params,macs,seed\n";
  os.precision(10);
  for (const AblateCell& c : cells)
    os << c.order << ',' << to_string(c.loss) << ',' << c.seq_mae << ',' << c.seq_rmse << ',' << c.seq_r
       << ',' << c.vid_mae << ',' << c.vid_rmse << ',' << c.vid_r << ',' << c.params << ',' << c.macs
       << ',' << c.seed << '\n';
}

}  // namespace rppg
