#pragma once

// Signal conditioning and heart-rate readout: zero-phase band-pass
// filtering, periodogram peak estimation, ground-truth preprocessing and
// lag measurement. Everything here is pure and runs in double precision
// regardless of the engine scalar type.

#include "rppg/core.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace rppg {

using VecXd = Eigen::ArrayXd;

struct Waveform {
  VecXd samples;
  double fs = 0.0;
};

struct HrEstimate {
  double bpm = 0.0;
  double peak_power = 0.0;
  std::vector<std::pair<double, double>> spectrum;  // (frequency Hz, power) over the search band
};

// ---------------------------------------------------------------------------
// FFT (iterative radix-2, in place). Sizes must be powers of two.
// ---------------------------------------------------------------------------
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ContractError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

inline int next_pow2(Index n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Rectangular-window periodogram of the mean-removed signal, zero-padded to
// nfft bins. Returns one-sided power (bins 0..nfft/2), scaled by 1/n.
inline VecXd periodogram(const VecXd& x, int nfft) {
  const Index n = x.size();
  if (n < 2) throw ContractError("periodogram: signal too short");
  if (nfft < n) throw ContractError("periodogram: nfft smaller than the signal");
  const double mu = x.mean();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(nfft), {0.0, 0.0});
  for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = {x[i] - mu, 0.0};
  fft_inplace(buf);
  VecXd p(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) p[k] = std::norm(buf[static_cast<std::size_t>(k)]) / static_cast<double>(n);
  return p;
}

// ---------------------------------------------------------------------------
// Band-pass filter: Butterworth band-pass realized as a biquad cascade and
// applied forward-backward, so the composite response has zero phase and
// squared magnitude. The -3 dB design edges sit outside the requested band
// so the composite gain at the band corners stays within the +-1 dB
// contract while one octave outside remains attenuated by far more than
// 20 dB. A two-section (4th-order) cascade cannot satisfy both bounds at
// once, hence the four sections here.
// ---------------------------------------------------------------------------
struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Butterworth band-pass, `sections` biquads from a prototype of the same
// even order. Edges are -3 dB cutoffs in Hz.
inline std::vector<Biquad> design_butter_bandpass(double lo_hz, double hi_hz, double fs, int sections = 4) {
  if (sections < 2 || sections % 2 != 0) throw ContractError("design_butter_bandpass: sections must be even");
  if (!(lo_hz > 0.0) || !(hi_hz > lo_hz) || !(fs > 2.0 * hi_hz))
    throw NyquistError("design_butter_bandpass: need 0 < lo < hi < fs/2");

  using cd = std::complex<double>;
  const double w1 = 2.0 * std::tan(std::numbers::pi * lo_hz / fs);  // prewarped
  const double w2 = 2.0 * std::tan(std::numbers::pi * hi_hz / fs);
  const double w0sq = w1 * w2;
  const double bw = w2 - w1;

  const int n = sections;
  std::vector<Biquad> sos;
  sos.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n / 2; ++k) {
    // Prototype pole in the upper-left quadrant; its conjugate is implied.
    const double ang = std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n);
    const cd p(std::cos(ang), std::sin(ang));
    const cd half = 0.5 * bw * p;
    const cd disc = std::sqrt(half * half - w0sq);
    for (const cd s : {half + disc, half - disc}) {
      const cd z = (2.0 + s) / (2.0 - s);  // bilinear transform
      // Zeros of the band-pass at z = +1 and z = -1.
      sos.push_back(Biquad{1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    }
  }

  // Normalize to unit gain at the geometric band center.
  const double wc = 2.0 * std::numbers::pi * std::sqrt(lo_hz * hi_hz) / fs;
  const cd e1 = std::polar(1.0, -wc), e2 = std::polar(1.0, -2.0 * wc);
  cd h(1.0, 0.0);
  for (const Biquad& s : sos) h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2);
  const double g = std::pow(1.0 / std::abs(h), 1.0 / static_cast<double>(n));
  for (Biquad& s : sos) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
  return sos;
}

inline double biquad_cascade_gain(const std::vector<Biquad>& sos, double f_hz, double fs) {
  using cd = std::complex<double>;
  const double w = 2.0 * std::numbers::pi * f_hz / fs;
  const cd e1 = std::polar(1.0, -w), e2 = std::polar(1.0, -2.0 * w);
  cd h(1.0, 0.0);
  for (const Biquad& s : sos) h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2);
  return std::abs(h);
}

// Direct form II transposed, zero initial state.
inline VecXd sosfilt(const std::vector<Biquad>& sos, const VecXd& x) {
  VecXd y = x;
  for (const Biquad& s : sos) {
    double z1 = 0.0, z2 = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      const double in = y[i];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      y[i] = out;
    }
  }
  return y;
}

// Forward-backward filtering with odd-reflection edge padding.
inline VecXd filtfilt(const std::vector<Biquad>& sos, const VecXd& x, Index pad) {
  const Index n = x.size();
  pad = std::min(pad, n - 1);
  VecXd ext(n + 2 * pad);
  for (Index i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, n) = x;
  for (Index i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  VecXd y = sosfilt(sos, ext);
  y.reverseInPlace();
  y = sosfilt(sos, y);
  y.reverseInPlace();
  return y.segment(pad, n);
}

// Zero-phase band-pass. Composite contract (verified by tests): gain within
// +-1 dB across [lo, hi], attenuation >= 20 dB one octave outside.
inline Waveform bandpass(const Waveform& w, double lo_hz = 0.75, double hi_hz = 2.5) {
  if (!(w.fs > 2.0 * hi_hz))
    throw NyquistError("bandpass: sampling rate " + std::to_string(w.fs) + " Hz cannot carry " +
                       std::to_string(hi_hz) + " Hz");
  if (w.samples.size() < 2) throw ContractError("bandpass: signal too short");
  const double lo_d = 0.8 * lo_hz;
  const double hi_d = std::min(1.2 * hi_hz, hi_hz + 0.45 * (w.fs / 2.0 - hi_hz));
  const auto sos = design_butter_bandpass(lo_d, hi_d, w.fs, 4);
  const Index pad = static_cast<Index>(std::lround(3.0 * w.fs / lo_hz));
  return Waveform{filtfilt(sos, w.samples, pad), w.fs};
}

// ---------------------------------------------------------------------------
// Heart-rate readout: periodogram peak restricted to [0.75, 2.5] Hz.
// Zero-padding to >= 4096 bins fixes the frequency resolution at
// fs/4096 (0.44 bpm at 30 Hz).
// ---------------------------------------------------------------------------
inline HrEstimate estimate_hr(const Waveform& w, Index window = 0, double band_lo = 0.75,
                              double band_hi = 2.5) {
  const Index n = window > 0 ? std::min(window, w.samples.size()) : w.samples.size();
  if (n < 128) throw ContractError("estimate_hr: need a window of at least 128 samples, got " + std::to_string(n));
  const VecXd x = w.samples.head(n);
  if (x.abs().maxCoeff() == 0.0) throw DegenerateSignalError("estimate_hr: all-zero signal");

  const int nfft = std::max(4096, next_pow2(n));
  const VecXd p = periodogram(x, nfft);
  const double df = w.fs / static_cast<double>(nfft);
  int k_lo = static_cast<int>(std::ceil(band_lo / df));
  int k_hi = static_cast<int>(std::floor(band_hi / df));
  k_hi = std::min(k_hi, nfft / 2);
  if (k_lo > k_hi) throw NyquistError("estimate_hr: search band is empty at fs " + std::to_string(w.fs));

  HrEstimate est;
  est.spectrum.reserve(static_cast<std::size_t>(k_hi - k_lo + 1));
  int best = k_lo;
  for (int k = k_lo; k <= k_hi; ++k) {
    est.spectrum.emplace_back(k * df, p[k]);
    if (p[k] > p[best]) best = k;
  }
  est.bpm = 60.0 * best * df;
  est.peak_power = p[best];
  return est;
}

// ---------------------------------------------------------------------------
// Ground-truth conditioning: detrend with a 1 s moving average, band-pass,
// linear resample to the target rate, standardize to zero mean and unit
// variance.
// ---------------------------------------------------------------------------
inline VecXd moving_average_detrend(const VecXd& x, Index window) {
  if (window % 2 == 0) ++window;
  const Index half = window / 2;
  const Index n = x.size();
  VecXd out(n);
  for (Index i = 0; i < n; ++i) {
    const Index a = std::max<Index>(0, i - half);
    const Index b = std::min<Index>(n - 1, i + half);
    out[i] = x[i] - x.segment(a, b - a + 1).mean();
  }
  return out;
}

inline VecXd resample_linear(const VecXd& x, double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) throw ContractError("resample_linear: positive rates required");
  const Index n_in = x.size();
  if (n_in < 2) throw ContractError("resample_linear: signal too short");
  const double duration = static_cast<double>(n_in - 1) / fs_in;
  const Index n_out = static_cast<Index>(std::floor(duration * fs_out)) + 1;
  VecXd out(n_out);
  for (Index j = 0; j < n_out; ++j) {
    const double t = static_cast<double>(j) / fs_out;
    const double pos = t * fs_in;
    const Index i = std::min<Index>(static_cast<Index>(pos), n_in - 2);
    const double frac = pos - static_cast<double>(i);
    out[j] = x[i] * (1.0 - frac) + x[i + 1] * frac;
  }
  return out;
}

inline VecXd standardize_signal(const VecXd& x) {
  const double mu = x.mean();
  const double var = (x - mu).square().mean();
  if (!(var > 0.0)) throw DegenerateSignalError("standardize_signal: zero variance");
  return (x - mu) / std::sqrt(var);
}

inline Waveform preprocess_groundtruth(const Waveform& raw, double target_fs = 30.0) {
  if (!(raw.fs >= target_fs))
    throw ContractError("preprocess_groundtruth: raw rate " + std::to_string(raw.fs) +
                        " Hz below target " + std::to_string(target_fs));
  if (static_cast<double>(raw.samples.size()) < 2.0 * raw.fs)
    throw TooShortError("preprocess_groundtruth: need at least 2 s of signal");
  VecXd x = moving_average_detrend(raw.samples, static_cast<Index>(std::lround(raw.fs)));
  x = bandpass(Waveform{x, raw.fs}).samples;
  if (raw.fs != target_fs) x = resample_linear(x, raw.fs, target_fs);
  return Waveform{standardize_signal(x), target_fs};
}

// ---------------------------------------------------------------------------
// Lag measurement: the shift k in [-max_lag, max_lag] that maximizes the
// overlap-mean correlation between a(t) and b(t-k), i.e. the shift you would
// apply to b (via shift_reference semantics) to best align it with a.
// ---------------------------------------------------------------------------
inline int dominant_lag(const VecXd& a, const VecXd& b, int max_lag) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("dominant_lag: equal-length signals required");
  const Index T = a.size();
  const VecXd ac = a - a.mean();
  const VecXd bc = b - b.mean();
  int best_k = -max_lag;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = -max_lag; k <= max_lag; ++k) {
    double acc = 0.0;
    Index count = 0;
    for (Index t = 0; t < T; ++t) {
      const Index s = t - k;
      if (s >= 0 && s < T) {
        acc += ac[t] * bc[s];
        ++count;
      }
    }
    if (count > 0) acc /= static_cast<double>(count);
    if (acc > best) {
      best = acc;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace rppg
