#pragma once

// Differentiable operations. The set is exactly what the model and losses
// need; every op records its backward closure on the active tape when any
// input carries a gradient. Layout conventions: image stacks are
// [N,C,H,W] row-major, per-frame feature sequences are [C,T].

#include "rppg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rppg {

enum class Mode { Train, Infer };

namespace detail {

template <class S>
inline bool tracking() {
  return Tape<S>::active() != nullptr;
}

template <class S>
inline Tensor<S> make_output(Shape shape, bool track, const char* op) {
  Tensor<S> y(std::move(shape), op);
  if (track) y.set_requires_grad(true);
  return y;
}

// Scatters a 3x3/pad-1 im2col patch matrix for one frame. cols is
// [C*9, H*W] row-major; row k = c*9 + (dy+1)*3 + (dx+1).
template <class S>
void im2col_3x3(const S* frame, Index C, Index H, Index W, RowMatrix<S>& cols) {
  const Index HW = H * W;
  for (Index c = 0; c < C; ++c) {
    for (Index dy = -1; dy <= 1; ++dy) {
      for (Index dx = -1; dx <= 1; ++dx) {
        const Index k = c * 9 + (dy + 1) * 3 + (dx + 1);
        S* row = cols.data() + k * HW;
        const S* src = frame + c * HW;
        for (Index y = 0; y < H; ++y) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(row + y * W, row + (y + 1) * W, S(0));
            continue;
          }
          for (Index x = 0; x < W; ++x) {
            const Index sx = x + dx;
            row[y * W + x] = (sx >= 0 && sx < W) ? src[sy * W + sx] : S(0);
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: 3x3 cross-correlation, stride 1, zero padding 1 (spatial size kept).
// input [N,Cin,H,W], weight [Cout,Cin,3,3], bias [Cout] -> [N,Cout,H,W].
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3)
    throw ShapeError("conv2d: weight must be [Cout,Cin,3,3], got " + shape_str(weight.shape()));
  if (input.dim(1) != weight.dim(1))
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) + " != weight Cin " +
                     std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    throw ShapeError("conv2d: bias must be [Cout], got " + shape_str(bias.shape()));

  const Index N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Index Cout = weight.dim(0), K = Cin * 9, HW = H * W;

  const bool track = detail::tracking<S>() &&
                     (input.requires_grad() || weight.requires_grad() || bias.requires_grad());
  Tensor<S> out = detail::make_output<S>({N, Cout, H, W}, track, "conv2d");

  ConstRowMatrixMap<S> wmat(weight.data(), Cout, K);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bvec(bias.data(), Cout);
  RowMatrix<S> cols(K, HW);
  for (Index n = 0; n < N; ++n) {
    detail::im2col_3x3(input.data() + n * Cin * HW, Cin, H, W, cols);
    RowMatrixMap<S> of(out.data() + n * Cout * HW, Cout, HW);
    of.noalias() = wmat * cols;
    of.colwise() += bvec;
  }

  if (track) {
    Tape<S>::active()->record("conv2d", out, [input = input, weight = weight, bias = bias, out, N, Cin, Cout, H, W, K, HW]() mutable {
      RowMatrix<S> cols(K, HW);
      ConstRowMatrixMap<S> wmat(weight.data(), Cout, K);
      for (Index n = 0; n < N; ++n) {
        ConstRowMatrixMap<S> g(out.grad().data() + n * Cout * HW, Cout, HW);
        if (bias.requires_grad()) {
          Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bias.grad().data(), Cout);
          gb.noalias() += g.rowwise().sum();
        }
        if (weight.requires_grad() || input.requires_grad())
          detail::im2col_3x3(input.data() + n * Cin * HW, Cin, H, W, cols);
        if (weight.requires_grad()) {
          RowMatrixMap<S> gw(weight.grad().data(), Cout, K);
          gw.noalias() += g * cols.transpose();
        }
        if (input.requires_grad()) {
          RowMatrix<S> gcols(K, HW);
          gcols.noalias() = wmat.transpose() * g;
          // col2im scatter-add
          S* gin = input.grad().data() + n * Cin * HW;
          for (Index c = 0; c < Cin; ++c) {
            for (Index dy = -1; dy <= 1; ++dy) {
              for (Index dx = -1; dx <= 1; ++dx) {
                const Index k = c * 9 + (dy + 1) * 3 + (dx + 1);
                const S* row = gcols.data() + k * HW;
                for (Index y = 0; y < H; ++y) {
                  const Index sy = y + dy;
                  if (sy < 0 || sy >= H) continue;
                  for (Index x = 0; x < W; ++x) {
                    const Index sx = x + dx;
                    if (sx >= 0 && sx < W) gin[c * HW + sy * W + sx] += row[y * W + x];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv1d_fixed: depthwise 5-tap temporal convolution with zero padding 2.
// The kernel is a fixed filter, never a trainable leaf; gradient flows to the
// input only. Taps are summed in ascending order so results are bitwise
// reproducible against a plain sliding-dot-product.
// input [C,T], kernel [5] -> [C,T].
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> conv1d_fixed(const Tensor<S>& input, const Tensor<S>& kernel) {
  if (input.rank() != 2) throw ShapeError("conv1d_fixed: input must be [C,T], got " + shape_str(input.shape()));
  if (kernel.size() != 5) throw ShapeError("conv1d_fixed: kernel must have 5 taps, got " + shape_str(kernel.shape()));
  if (kernel.requires_grad()) throw ContractError("conv1d_fixed: kernel is a fixed filter, not a trainable leaf");
  const Index C = input.dim(0), T = input.dim(1);
  if (T < 1) throw ShapeError("conv1d_fixed: empty time axis");

  const bool track = detail::tracking<S>() && input.requires_grad();
  Tensor<S> out = detail::make_output<S>({C, T}, track, "conv1d_fixed");

  const S* k = kernel.data();
  const S* in = input.data();
  S* o = out.data();
  for (Index c = 0; c < C; ++c) {
    for (Index t = 0; t < T; ++t) {
      S acc = S(0);
      for (Index j = 0; j < 5; ++j) {
        const Index s = t + j - 2;
        if (s >= 0 && s < T) acc += k[j] * in[c * T + s];
      }
      o[c * T + t] = acc;
    }
  }

  if (track) {
    Tape<S>::active()->record("conv1d_fixed", out, [input = input, kernel = kernel, out, C, T]() mutable {
      const S* k = kernel.data();
      const S* g = out.grad().data();
      S* gin = input.grad().data();
      for (Index c = 0; c < C; ++c) {
        for (Index s = 0; s < T; ++s) {
          S acc = S(0);
          for (Index j = 0; j < 5; ++j) {
            const Index t = s - j + 2;
            if (t >= 0 && t < T) acc += k[j] * g[c * T + t];
          }
          gin[c * T + s] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// tanh, elementwise.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> tanh(const Tensor<S>& x) {
  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>(x.shape(), track, "tanh");
  y.array() = x.array().tanh();
  if (track) {
    Tape<S>::active()->record("tanh", y, [x = x, y]() mutable {
      x.grad() += y.grad() * (S(1) - y.array().square());
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// avgpool2d: 2x2 window, stride 2. Odd trailing rows/columns are truncated
// (floor division), so [N,C,5,5] pools to [N,C,2,2].
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> avgpool2d(const Tensor<S>& x) {
  if (x.rank() != 4) throw ShapeError("avgpool2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Ho = H / 2, Wo = W / 2;
  if (Ho < 1 || Wo < 1) throw ShapeError("avgpool2d: spatial size too small to pool: " + shape_str(x.shape()));

  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>({N, C, Ho, Wo}, track, "avgpool2d");

  const S* in = x.data();
  S* o = y.data();
  for (Index nc = 0; nc < N * C; ++nc) {
    const S* p = in + nc * H * W;
    S* q = o + nc * Ho * Wo;
    for (Index yy = 0; yy < Ho; ++yy)
      for (Index xx = 0; xx < Wo; ++xx)
        q[yy * Wo + xx] = (p[(2 * yy) * W + 2 * xx] + p[(2 * yy) * W + 2 * xx + 1] +
                           p[(2 * yy + 1) * W + 2 * xx] + p[(2 * yy + 1) * W + 2 * xx + 1]) *
                          S(0.25);
  }

  if (track) {
    Tape<S>::active()->record("avgpool2d", y, [x = x, y, N, C, H, W, Ho, Wo]() mutable {
      const S* g = y.grad().data();
      S* gin = x.grad().data();
      for (Index nc = 0; nc < N * C; ++nc) {
        const S* gq = g + nc * Ho * Wo;
        S* gp = gin + nc * H * W;
        for (Index yy = 0; yy < Ho; ++yy)
          for (Index xx = 0; xx < Wo; ++xx) {
            const S v = gq[yy * Wo + xx] * S(0.25);
            gp[(2 * yy) * W + 2 * xx] += v;
            gp[(2 * yy) * W + 2 * xx + 1] += v;
            gp[(2 * yy + 1) * W + 2 * xx] += v;
            gp[(2 * yy + 1) * W + 2 * xx + 1] += v;
          }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// batchnorm2d over the frame axis: channel statistics are taken across
// (N,H,W). Training mode normalizes with batch statistics (biased variance)
// and updates the running estimates in place; inference mode uses the
// running estimates and never mutates them.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      ArrayX<S>& running_mean, ArrayX<S>& running_var, Mode mode,
                      S eps = S(1e-5), S momentum = S(0.1)) {
  if (x.rank() != 4) throw ShapeError("batchnorm2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C)
    throw ShapeError("batchnorm2d: per-channel parameter size mismatch");
  const Index HW = H * W;
  const Index M = N * HW;  // reduction count per channel

  ArrayX<S> mean(C), istd(C);
  if (mode == Mode::Train) {
    for (Index c = 0; c < C; ++c) {
      S sum = S(0), sq = S(0);
      for (Index n = 0; n < N; ++n) {
        const S* p = x.data() + (n * C + c) * HW;
        for (Index i = 0; i < HW; ++i) {
          sum += p[i];
          sq += p[i] * p[i];
        }
      }
      const S mu = sum / S(M);
      const S var = std::max<S>(sq / S(M) - mu * mu, S(0));
      mean[c] = mu;
      istd[c] = S(1) / std::sqrt(var + eps);
      running_mean[c] = (S(1) - momentum) * running_mean[c] + momentum * mu;
      running_var[c] = (S(1) - momentum) * running_var[c] + momentum * var;
    }
  } else {
    for (Index c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      istd[c] = S(1) / std::sqrt(running_var[c] + eps);
    }
  }

  const bool track = detail::tracking<S>() &&
                     (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  Tensor<S> y = detail::make_output<S>(x.shape(), track, "batchnorm2d");
  for (Index n = 0; n < N; ++n) {
    for (Index c = 0; c < C; ++c) {
      const S* p = x.data() + (n * C + c) * HW;
      S* q = y.data() + (n * C + c) * HW;
      const S mu = mean[c], is = istd[c], g = gamma.data()[c], b = beta.data()[c];
      for (Index i = 0; i < HW; ++i) q[i] = (p[i] - mu) * is * g + b;
    }
  }

  if (track) {
    const bool train = (mode == Mode::Train);
    Tape<S>::active()->record("batchnorm2d", y,
                              [x = x, gamma = gamma, beta = beta, y, mean, istd, N, C, HW, M, train]() mutable {
      for (Index c = 0; c < C; ++c) {
        const S mu = mean[c], is = istd[c], gm = gamma.data()[c];
        S sum_g = S(0), sum_gx = S(0);
        for (Index n = 0; n < N; ++n) {
          const S* gq = y.grad().data() + (n * C + c) * HW;
          const S* p = x.data() + (n * C + c) * HW;
          for (Index i = 0; i < HW; ++i) {
            sum_g += gq[i];
            sum_gx += gq[i] * (p[i] - mu) * is;
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += sum_gx;
        if (beta.requires_grad()) beta.grad()[c] += sum_g;
        if (!x.requires_grad()) continue;
        if (train) {
          const S mg = sum_g / S(M), mgx = sum_gx / S(M);
          for (Index n = 0; n < N; ++n) {
            const S* gq = y.grad().data() + (n * C + c) * HW;
            const S* p = x.data() + (n * C + c) * HW;
            S* gp = x.grad().data() + (n * C + c) * HW;
            for (Index i = 0; i < HW; ++i) {
              const S xhat = (p[i] - mu) * is;
              gp[i] += gm * is * (gq[i] - mg - xhat * mgx);
            }
          }
        } else {
          for (Index n = 0; n < N; ++n) {
            const S* gq = y.grad().data() + (n * C + c) * HW;
            S* gp = x.grad().data() + (n * C + c) * HW;
            for (Index i = 0; i < HW; ++i) gp[i] += gq[i] * gm * is;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// spatial_mean: collapse each frame's spatial extent.
// [N,C,H,W] -> [C,N] (channel-major feature sequence, time = frame index).
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> spatial_mean(const Tensor<S>& x) {
  if (x.rank() != 4) throw ShapeError("spatial_mean: input must be [N,C,H,W], got " + shape_str(x.shape()));
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);

  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>({C, N}, track, "spatial_mean");
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S* p = x.data() + (n * C + c) * HW;
      S acc = S(0);
      for (Index i = 0; i < HW; ++i) acc += p[i];
      y.data()[c * N + n] = acc / S(HW);
    }

  if (track) {
    Tape<S>::active()->record("spatial_mean", y, [x = x, y, N, C, HW]() mutable {
      const S inv = S(1) / S(HW);
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
          const S g = y.grad().data()[c * N + n] * inv;
          S* gp = x.grad().data() + (n * C + c) * HW;
          for (Index i = 0; i < HW; ++i) gp[i] += g;
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// concat_channels: stack [Ci,T] blocks along the channel axis.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Index T = xs.front().dim(1);
  Index Ctot = 0;
  bool any_grad = false;
  for (const Tensor<S>& x : xs) {
    if (x.rank() != 2 || x.dim(1) != T)
      throw ShapeError("concat_channels: all inputs must be [C,T] with equal T");
    Ctot += x.dim(0);
    any_grad = any_grad || x.requires_grad();
  }

  const bool track = detail::tracking<S>() && any_grad;
  Tensor<S> y = detail::make_output<S>({Ctot, T}, track, "concat_channels");
  Index row = 0;
  for (const Tensor<S>& x : xs) {
    std::copy(x.data(), x.data() + x.size(), y.data() + row * T);
    row += x.dim(0);
  }

  if (track) {
    std::vector<Tensor<S>> inputs = xs;
    Tape<S>::active()->record("concat_channels", y, [inputs, y, T]() mutable {
      Index row = 0;
      for (Tensor<S>& x : inputs) {
        if (x.requires_grad())
          x.grad() += Eigen::Map<const ArrayX<S>>(y.grad().data() + row * T, x.size());
        row += x.dim(0);
      }
    });
  }
  return y;
}

// Non-differentiating inverse of concat_channels, used to inspect blocks.
template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, Index first_channel, Index count) {
  if (x.rank() != 2) throw ShapeError("slice_channels: input must be [C,T]");
  if (first_channel < 0 || count <= 0 || first_channel + count > x.dim(0))
    throw RangeError("slice_channels: channel range out of bounds");
  const Index T = x.dim(1);
  return Tensor<S>::from_array({count, T},
                               Eigen::Map<const ArrayX<S>>(x.data() + first_channel * T, count * T));
}

// ---------------------------------------------------------------------------
// conv1x1: channel-mixing head. x [C,T], weight [Cout,C], bias [Cout]
// -> [Cout,T].
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> conv1x1(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.rank() != 2) throw ShapeError("conv1x1: input must be [C,T], got " + shape_str(x.shape()));
  if (weight.rank() != 2 || weight.dim(1) != x.dim(0))
    throw ShapeError("conv1x1: weight must be [Cout," + std::to_string(x.dim(0)) + "], got " +
                     shape_str(weight.shape()));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    throw ShapeError("conv1x1: bias must be [Cout]");
  const Index C = x.dim(0), T = x.dim(1), Cout = weight.dim(0);

  const bool track = detail::tracking<S>() &&
                     (x.requires_grad() || weight.requires_grad() || bias.requires_grad());
  Tensor<S> y = detail::make_output<S>({Cout, T}, track, "conv1x1");
  {
    ConstRowMatrixMap<S> xm(x.data(), C, T);
    ConstRowMatrixMap<S> wm(weight.data(), Cout, C);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bv(bias.data(), Cout);
    RowMatrixMap<S> ym(y.data(), Cout, T);
    ym.noalias() = wm * xm;
    ym.colwise() += bv;
  }

  if (track) {
    Tape<S>::active()->record("conv1x1", y, [x = x, weight = weight, bias = bias, y, C, T, Cout]() mutable {
      ConstRowMatrixMap<S> g(y.grad().data(), Cout, T);
      if (bias.requires_grad()) {
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bias.grad().data(), Cout);
        gb.noalias() += g.rowwise().sum();
      }
      if (weight.requires_grad()) {
        ConstRowMatrixMap<S> xm(x.data(), C, T);
        RowMatrixMap<S> gw(weight.grad().data(), Cout, C);
        gw.noalias() += g * xm.transpose();
      }
      if (x.requires_grad()) {
        ConstRowMatrixMap<S> wm(weight.data(), Cout, C);
        RowMatrixMap<S> gx(x.grad().data(), C, T);
        gx.noalias() += wm.transpose() * g;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reshape: same element count, new shape (copying, so the result is its own
// node on the tape).
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>(std::move(shape), track, "reshape");
  y.array() = x.array();
  if (track) {
    Tape<S>::active()->record("reshape", y, [x = x, y]() mutable { x.grad() += y.grad(); });
  }
  return y;
}

// ---------------------------------------------------------------------------
// mse_reduce: mean squared difference over all elements -> scalar.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> mse_reduce(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mse_reduce: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const bool track = detail::tracking<S>() && (a.requires_grad() || b.requires_grad());
  Tensor<S> y = detail::make_output<S>({1}, track, "mse_reduce");
  y.array()[0] = (a.array() - b.array()).square().mean();
  if (track) {
    Tape<S>::active()->record("mse_reduce", y, [a = a, b = b, y]() mutable {
      const S scale = y.grad()[0] * S(2) / S(a.size());
      if (a.requires_grad()) a.grad() += scale * (a.array() - b.array());
      if (b.requires_grad()) b.grad() -= scale * (a.array() - b.array());
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// softmax over a 1-d tensor.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> softmax(const Tensor<S>& x) {
  if (x.rank() != 1) throw ShapeError("softmax: expects a 1-d tensor, got " + shape_str(x.shape()));
  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>(x.shape(), track, "softmax");
  const S mx = x.array().maxCoeff();
  y.array() = (x.array() - mx).exp();
  y.array() /= y.array().sum();
  if (track) {
    Tape<S>::active()->record("softmax", y, [x = x, y]() mutable {
      const S inner = (y.grad() * y.array()).sum();
      x.grad() += y.array() * (y.grad() - inner);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// standardize: (x - mean) / std with population std -> same shape.
// Rejects constant inputs.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> standardize(const Tensor<S>& x) {
  if (x.rank() != 1 || x.size() < 2) throw ShapeError("standardize: expects a 1-d tensor of length >= 2");
  const S mu = x.array().mean();
  const S var = (x.array() - mu).square().mean();
  if (!(var > S(0))) throw DegenerateSignalError("standardize: signal has zero variance");
  const S sd = std::sqrt(var);

  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>(x.shape(), track, "standardize");
  y.array() = (x.array() - mu) / sd;
  if (track) {
    Tape<S>::active()->record("standardize", y, [x = x, y, sd]() mutable {
      const S mg = y.grad().mean();
      const S mgy = (y.grad() * y.array()).mean();
      x.grad() += (y.grad() - mg - y.array() * mgy) / sd;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// dot: inner product of two equal-length 1-d tensors -> scalar.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
    throw ShapeError("dot: expects equal-length 1-d tensors");
  const bool track = detail::tracking<S>() && (a.requires_grad() || b.requires_grad());
  Tensor<S> y = detail::make_output<S>({1}, track, "dot");
  y.array()[0] = (a.array() * b.array()).sum();
  if (track) {
    Tape<S>::active()->record("dot", y, [a = a, b = b, y]() mutable {
      const S g = y.grad()[0];
      if (a.requires_grad()) a.grad() += g * b.array();
      if (b.requires_grad()) b.grad() += g * a.array();
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// stack_scalars: gather K scalar tensors into a [K] vector.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> stack_scalars(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: empty input list");
  bool any_grad = false;
  for (const Tensor<S>& x : xs) {
    if (x.size() != 1) throw ShapeError("stack_scalars: all inputs must be scalar");
    any_grad = any_grad || x.requires_grad();
  }
  const bool track = detail::tracking<S>() && any_grad;
  Tensor<S> y = detail::make_output<S>({static_cast<Index>(xs.size())}, track, "stack_scalars");
  for (std::size_t i = 0; i < xs.size(); ++i) y.data()[i] = xs[i].item();
  if (track) {
    std::vector<Tensor<S>> inputs = xs;
    Tape<S>::active()->record("stack_scalars", y, [inputs, y]() mutable {
      for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i].requires_grad()) inputs[i].grad()[0] += y.grad()[static_cast<Index>(i)];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// max_reduce over a 1-d tensor -> scalar; subgradient goes to the first
// maximizing element.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> max_reduce(const Tensor<S>& x) {
  if (x.rank() != 1 || x.size() < 1) throw ShapeError("max_reduce: expects a non-empty 1-d tensor");
  Index arg = 0;
  x.array().maxCoeff(&arg);
  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>({1}, track, "max_reduce");
  y.array()[0] = x.array()[arg];
  if (track) {
    Tape<S>::active()->record("max_reduce", y, [x = x, y, arg]() mutable { x.grad()[arg] += y.grad()[0]; });
  }
  return y;
}

// ---------------------------------------------------------------------------
// affine: a*x + b elementwise with constant coefficients.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> affine(const Tensor<S>& x, S a, S b) {
  const bool track = detail::tracking<S>() && x.requires_grad();
  Tensor<S> y = detail::make_output<S>(x.shape(), track, "affine");
  y.array() = a * x.array() + b;
  if (track) {
    Tape<S>::active()->record("affine", y, [x = x, y, a]() mutable { x.grad() += a * y.grad(); });
  }
  return y;
}

}  // namespace rppg
