#pragma once

// Synthetic desk-scale data: video cubes whose masked pixels are modulated by
// a pulse waveform with a known per-subject temporal offset between the
// video and the exported ground truth. Generation is pure given (spec, seed).

#include "rppg/dsp.hpp"
#include "rppg/random.hpp"
#include "rppg/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rppg {

struct HrPoint {
  double t_sec;
  double bpm;
};

struct SynthSubjectSpec {
  std::string subject_id;
  std::vector<HrPoint> hr_trajectory;  // piecewise linear in time, bpm within [45,150]
  int true_offset = 0;                 // frames; |k*| <= floor(fps/2)
  double modulation_depth = 0.1;       // peak-to-peak fraction of pixel range, (0, 0.2]
  double noise_sigma = 0.0;            // per-pixel Gaussian noise std
  double skin_mask = 1.0;              // fraction of pixels carrying the signal
  std::uint64_t seed = 0;

  void validate(double fps) const {
    if (subject_id.empty()) throw ValidationError("synth spec: empty subject id");
    if (hr_trajectory.empty()) throw ValidationError("synth spec: empty hr trajectory");
    for (const HrPoint& p : hr_trajectory)
      if (p.bpm < 45.0 || p.bpm > 150.0)
        throw ValidationError("synth spec: bpm " + std::to_string(p.bpm) + " outside [45,150]");
    const int half = static_cast<int>(std::floor(fps / 2.0));
    if (std::abs(true_offset) > half)
      throw ValidationError("synth spec: |true_offset| " + std::to_string(true_offset) +
                            " exceeds floor(fps/2) = " + std::to_string(half));
    if (!(modulation_depth > 0.0) || modulation_depth > 0.2)
      throw ValidationError("synth spec: modulation_depth must be in (0, 0.2]");
    if (noise_sigma < 0.0) throw ValidationError("synth spec: noise_sigma must be >= 0");
    if (skin_mask < 0.0 || skin_mask > 1.0) throw ValidationError("synth spec: skin_mask must be in [0,1]");
  }
};

template <class S>
struct SynthSample {
  Tensor<S> video;  // [T,3,H,W], values in [0,1]
  double fps = 30.0;
  Waveform groundtruth;  // standardized, length T, fs = fps
  std::string subject_id;
  std::optional<int> true_offset;
};

namespace detail {

inline double bpm_at(const std::vector<HrPoint>& traj, double t) {
  if (t <= traj.front().t_sec) return traj.front().bpm;
  if (t >= traj.back().t_sec) return traj.back().bpm;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (t <= traj[i].t_sec) {
      const double f = (t - traj[i - 1].t_sec) / (traj[i].t_sec - traj[i - 1].t_sec);
      return traj[i - 1].bpm + f * (traj[i].bpm - traj[i - 1].bpm);
    }
  }
  return traj.back().bpm;
}

// Pulse samples on the frame grid [first, first+count), phase-integrated so
// the instantaneous frequency follows the trajectory. The waveform is a
// fundamental plus a 0.3-amplitude first harmonic, scaled to unit peak.
inline VecXd pulse_track(const std::vector<HrPoint>& traj, Index first, Index count, double fps) {
  VecXd out(count);
  double phase = 0.0;
  double f_prev = bpm_at(traj, static_cast<double>(first) / fps) / 60.0;
  for (Index i = 0; i < count; ++i) {
    const double t = static_cast<double>(first + i) / fps;
    const double f = bpm_at(traj, t) / 60.0;
    if (i > 0) phase += std::numbers::pi * (f_prev + f) / fps;  // trapezoidal 2*pi*integral(f)
    f_prev = f;
    out[i] = (std::sin(phase) + 0.3 * std::sin(2.0 * phase)) / 1.3;
  }
  return out;
}

}  // namespace detail

// Builds one sample. The masked pixels of frame t carry the pulse value at
// frame t; the exported ground truth is the same pulse advanced by
// true_offset frames (the video lags the reference by k* frames for
// positive k*), so re-aligning the ground truth onto the video requires a
// shift of exactly +k*.
template <class S>
SynthSample<S> generate(const SynthSubjectSpec& spec, Index t_frames, Index h, Index w, double fps = 30.0) {
  spec.validate(fps);
  if (t_frames < 5 || h < 8 || w < 8)
    throw ValidationError("generate: need T >= 5 and H,W >= 8, got T=" + std::to_string(t_frames) +
                          " H=" + std::to_string(h) + " W=" + std::to_string(w));

  const int half = static_cast<int>(std::floor(fps / 2.0));
  const Index first = -static_cast<Index>(half);
  const Index count = t_frames + 2 * half;
  const VecXd pulse = detail::pulse_track(spec.hr_trajectory, first, count, fps);
  const auto pulse_at = [&](Index frame) { return pulse[frame - first]; };

  Rng rng(spec.seed);
  const Index hw = h * w;
  std::vector<bool> mask(static_cast<std::size_t>(hw));
  for (Index i = 0; i < hw; ++i) mask[static_cast<std::size_t>(i)] = rng.uniform() < spec.skin_mask;
  VecXd base(3 * hw);
  for (Index i = 0; i < 3 * hw; ++i) base[i] = rng.uniform(0.35, 0.65);

  Tensor<S> video({t_frames, 3, h, w});
  S* v = video.data();
  const double amp = 0.5 * spec.modulation_depth;
  for (Index t = 0; t < t_frames; ++t) {
    const double p = amp * pulse_at(t);
    for (Index c = 0; c < 3; ++c) {
      for (Index i = 0; i < hw; ++i) {
        double val = base[c * hw + i];
        if (mask[static_cast<std::size_t>(i)]) val += p;
        if (spec.noise_sigma > 0.0) val += spec.noise_sigma * rng.normal();
        v[(t * 3 + c) * hw + i] = static_cast<S>(std::clamp(val, 0.0, 1.0));
      }
    }
  }

  VecXd gt(t_frames);
  for (Index t = 0; t < t_frames; ++t) gt[t] = pulse_at(t + spec.true_offset);

  SynthSample<S> sample;
  sample.video = std::move(video);
  sample.fps = fps;
  sample.groundtruth = Waveform{standardize_signal(gt), fps};
  sample.subject_id = spec.subject_id;
  sample.true_offset = spec.true_offset;
  return sample;
}

// All videos of a subject share its spec (and therefore its offset); video v
// draws its pixels from a per-video derived seed and continues the subject's
// pulse in time, so consecutive videos behave like consecutive recordings.
template <class S>
std::vector<SynthSample<S>> generate_cohort(const std::vector<SynthSubjectSpec>& subjects,
                                            int videos_per_subject, Index t_frames, Index h, Index w,
                                            double fps = 30.0) {
  if (subjects.empty() || videos_per_subject < 1)
    throw ValidationError("generate_cohort: need at least one subject and one video per subject");
  std::vector<SynthSample<S>> out;
  out.reserve(subjects.size() * static_cast<std::size_t>(videos_per_subject));
  for (const SynthSubjectSpec& subject : subjects) {
    for (int v = 0; v < videos_per_subject; ++v) {
      SynthSubjectSpec per_video = subject;
      per_video.seed = derive_seed(subject.seed, static_cast<std::uint64_t>(v));
      // Shift the trajectory so video v starts where video v-1 ended.
      const double t0 = static_cast<double>(v) * static_cast<double>(t_frames) / fps;
      for (HrPoint& p : per_video.hr_trajectory) p.t_sec -= t0;
      out.push_back(generate<S>(per_video, t_frames, h, w, fps));
    }
  }
  return out;
}

// Subject specs with offsets drawn without replacement (cycling only when a
// cohort is larger than the candidate set).
inline std::vector<SynthSubjectSpec> make_cohort_specs(int n_subjects, const SynthSubjectSpec& tmpl,
                                                       double fps, std::uint64_t seed) {
  if (n_subjects < 1) throw ValidationError("make_cohort_specs: n_subjects must be >= 1");
  const int half = static_cast<int>(std::floor(fps / 2.0));
  std::vector<int> candidates;
  for (int k = -half; k <= half; ++k) candidates.push_back(k);
  Rng rng(derive_seed(seed, "offsets"));
  rng.shuffle(candidates);

  std::vector<SynthSubjectSpec> specs;
  specs.reserve(static_cast<std::size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) {
    SynthSubjectSpec s = tmpl;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%02d", i + 1);
    s.subject_id = buf;
    s.true_offset = candidates[static_cast<std::size_t>(i) % candidates.size()];
    s.seed = derive_seed(seed, s.subject_id);
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace rppg
