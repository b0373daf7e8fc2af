#pragma once

// The rPPG network: a two-stage 2-d spatial encoder, per-frame spatial
// collapse, a chain of fixed differential temporal convolutions whose
// outputs are concatenated channel-wise, and a 1x1 head projecting to the
// predicted signal. Output length always equals the input frame count.

#include "rppg/ops.hpp"
#include "rppg/random.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace rppg {

struct TdmArch {
  Index c1 = 16;
  Index c2 = 32;
  int order = 2;  // number of chained derivative stages; 0 = spatial-only
  Index input_h = 128;
  Index input_w = 128;

  bool operator==(const TdmArch&) const = default;
};

// Trainable parameter count, closed form. The derivative kernel is fixed and
// the batch-norm running statistics are estimates, so neither is counted.
inline long long count_params(const TdmArch& a) {
  const long long conv1 = 27 * a.c1 + a.c1;
  const long long bn1 = 2 * a.c1;
  const long long conv2 = 9 * a.c1 * a.c2 + a.c2;
  const long long bn2 = 2 * a.c2;
  const long long head_in = a.order >= 1 ? static_cast<long long>(a.order) * a.c2 : a.c2;
  return conv1 + bn1 + conv2 + bn2 + head_in + 1;
}

// Multiply-accumulates for one T-frame clip: both spatial convolutions, the
// derivative stages, and the head. Activations, batch norm and pooling are
// not counted.
inline long long count_macs(const TdmArch& a, Index t, Index h, Index w) {
  const Index h1 = h / 2, w1 = w / 2;  // after first pool
  long long macs = 0;
  macs += static_cast<long long>(t) * a.c1 * h * w * (3 * 9);
  macs += static_cast<long long>(t) * a.c2 * h1 * w1 * (a.c1 * 9);
  macs += static_cast<long long>(a.order) * t * a.c2 * 5;
  const Index head_in = a.order >= 1 ? a.order * a.c2 : a.c2;
  macs += static_cast<long long>(t) * head_in;
  return macs;
}

// Derivative filter taps; approximates d/dt over a 5-frame window.
template <class S>
inline Tensor<S> make_dtc_kernel() {
  return Tensor<S>::from_vector({5}, {S(-2), S(-1), S(0), S(1), S(2)}, "dtc.kernel");
}

// Applies the fixed derivative filter `order` times; element i is the i-th
// order output and each stage consumes the previous stage's output. Returns
// an empty list for order 0.
template <class S>
std::vector<Tensor<S>> dtc_chain(const Tensor<S>& features, const Tensor<S>& kernel, int order) {
  if (order < 0) throw ContractError("dtc_chain: order must be >= 0");
  std::vector<Tensor<S>> outs;
  outs.reserve(static_cast<std::size_t>(order));
  Tensor<S> cur = features;
  for (int i = 0; i < order; ++i) {
    cur = conv1d_fixed(cur, kernel);
    outs.push_back(cur);
  }
  return outs;
}

// A video clip plus its frame rate. Frames are [T,3,H,W] with values in
// [0,1]; at least 5 frames (the temporal kernel support) and 8x8 pixels.
template <class S>
struct VideoCube {
  Tensor<S> frames;
  double fps = 30.0;

  void validate() const {
    if (!frames.defined() || frames.rank() != 4 || frames.dim(1) != 3)
      throw ValidationError("video cube: frames must be [T,3,H,W]");
    if (frames.dim(0) < 5) throw ValidationError("video cube: need at least 5 frames");
    if (frames.dim(2) < 8 || frames.dim(3) < 8)
      throw ValidationError("video cube: spatial size must be at least 8x8");
    if (!(fps > 0.0)) throw ValidationError("video cube: fps must be positive");
    if ((frames.array() < S(0)).any() || (frames.array() > S(1)).any())
      throw ValidationError("video cube: pixel values must lie in [0,1]");
  }
};

template <class S>
struct BatchNormLayer {
  Tensor<S> gamma, beta;
  ArrayX<S> running_mean, running_var;
  S eps = S(1e-5);
  S momentum = S(0.1);

  BatchNormLayer(Index c, const std::string& prefix)
      : gamma(Tensor<S>::full({c}, S(1), prefix + ".gamma")),
        beta(Tensor<S>::zeros({c}, prefix + ".beta")),
        running_mean(ArrayX<S>::Zero(c)),
        running_var(ArrayX<S>::Ones(c)) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
  }

  Tensor<S> operator()(const Tensor<S>& x, Mode mode) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, mode, eps, momentum);
  }
};

template <class S>
class TdmModel {
 public:
  TdmModel(const TdmArch& arch, std::uint64_t seed)
      : arch_(arch),
        conv1_w(Tensor<S>::zeros({arch.c1, 3, 3, 3}, "conv1.weight")),
        conv1_b(Tensor<S>::zeros({arch.c1}, "conv1.bias")),
        bn1(arch.c1, "bn1"),
        conv2_w(Tensor<S>::zeros({arch.c2, arch.c1, 3, 3}, "conv2.weight")),
        conv2_b(Tensor<S>::zeros({arch.c2}, "conv2.bias")),
        bn2(arch.c2, "bn2"),
        head_w(Tensor<S>::zeros({1, arch.order >= 1 ? arch.order * arch.c2 : arch.c2}, "head.weight")),
        head_b(Tensor<S>::zeros({1}, "head.bias")),
        dtc_kernel_(make_dtc_kernel<S>()) {
    if (arch.order < 0) throw ValidationError("model: order must be >= 0");
    Rng rng(seed);
    init_kaiming_uniform(conv1_w, 3 * 9, rng);
    init_kaiming_uniform(conv2_w, arch.c1 * 9, rng);
    init_kaiming_uniform(head_w, head_w.dim(1), rng);
    for (Tensor<S>& p : {std::ref(conv1_w), std::ref(conv1_b), std::ref(conv2_w), std::ref(conv2_b),
                         std::ref(head_w), std::ref(head_b)})
      p.set_requires_grad(true);
  }

  const TdmArch& arch() const { return arch_; }
  const Tensor<S>& dtc_kernel() const { return dtc_kernel_; }

  // video [T,3,H,W] in [0,1] -> predicted signal [T].
  Tensor<S> forward(const Tensor<S>& video, Mode mode) {
    if (video.rank() != 4 || video.dim(1) != 3)
      throw ShapeError("forward: video must be [T,3,H,W], got " + shape_str(video.shape()));
    const Index T = video.dim(0);
    if (T < 5) throw ContractError("forward: need at least 5 frames for the temporal kernel support");

    Tensor<S> x = conv2d(video, conv1_w, conv1_b);
    x = rppg::tanh(x);
    x = bn1(x, mode);
    x = avgpool2d(x);
    x = conv2d(x, conv2_w, conv2_b);
    x = rppg::tanh(x);
    x = bn2(x, mode);
    x = avgpool2d(x);
    Tensor<S> feats = spatial_mean(x);  // [c2, T]

    Tensor<S> head_in = feats;
    if (arch_.order >= 1) head_in = concat_channels(dtc_chain(feats, dtc_kernel_, arch_.order));
    Tensor<S> out = conv1x1(head_in, head_w, head_b);  // [1, T]
    return reshape(out, {T});
  }

  Tensor<S> forward(const VideoCube<S>& cube, Mode mode) {
    cube.validate();
    return forward(cube.frames, mode);
  }

  // Trainable leaves, fixed order. The derivative kernel and the batch-norm
  // running statistics are intentionally absent.
  std::vector<Tensor<S>> parameters() {
    return {conv1_w, conv1_b, bn1.gamma, bn1.beta, conv2_w, conv2_b, bn2.gamma, bn2.beta, head_w, head_b};
  }

  void zero_grad() {
    for (Tensor<S>& p : parameters()) p.zero_grad();
  }

  long long parameter_count() {
    long long n = 0;
    for (const Tensor<S>& p : parameters()) n += p.size();
    return n;
  }

  TdmArch arch_;
  Tensor<S> conv1_w, conv1_b;
  BatchNormLayer<S> bn1;
  Tensor<S> conv2_w, conv2_b;
  BatchNormLayer<S> bn2;
  Tensor<S> head_w, head_b;
  Tensor<S> dtc_kernel_;

 private:
  static void init_kaiming_uniform(Tensor<S>& w, Index fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Index i = 0; i < w.size(); ++i) w.array()[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
};

}  // namespace rppg
