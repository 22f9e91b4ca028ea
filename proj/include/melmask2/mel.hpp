#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "melmask2/errors.hpp"
#include "melmask2/stft.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2 {

inline constexpr double kEpsLog = 1e-7;  // guards ln at zero magnitude
inline constexpr double kEpsDiv = 1e-8;  // guards gain ratios

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

enum class GainScale { kMel, kLinear };

// Per-frame gains in [0,1], tagged with the scale they live on.
struct GainTensor {
  Tensor<double> values;  // [frames, bands]
  GainScale scale = GainScale::kMel;

  int frames() const { return values.dim(0); }
  int bands() const { return values.dim(1); }

  void check_range() const {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = values[i];
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw InvalidInputError("gain outside [0,1]");
    }
  }
};

// Triangular filters with apexes equally spaced on the HTK Mel scale from
// 0 Hz to sample_rate/2, unit peak each. `interp` is the transpose with each
// linear-bin row renormalized to sum 1 over the filters covering it. Bin 0
// sits exactly on the first filter's zero foot; its interp row stays all-zero
// and masking consequently zeroes DC.
struct MelFilterBank {
  int n_mel = 0;
  int n_lin = 0;
  Tensor<double> weights;  // [n_mel, n_lin]
  Tensor<double> interp;   // [n_lin, n_mel]
};

inline MelFilterBank build_mel_filterbank(int n_mel, int n_lin, int sample_rate) {
  if (n_mel <= 0 || n_lin <= 0 || n_mel >= n_lin)
    throw InvalidConfigError("need 0 < n_mel < n_lin");
  if (sample_rate <= 0) throw InvalidConfigError("sample_rate must be > 0");

  MelFilterBank fb;
  fb.n_mel = n_mel;
  fb.n_lin = n_lin;
  fb.weights = Tensor<double>({n_mel, n_lin});
  fb.interp = Tensor<double>({n_lin, n_mel});

  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(n_mel) + 2);
  for (int i = 0; i < n_mel + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (n_mel + 1));

  const double bin_hz = nyquist / n_lin;
  for (int m = 0; m < n_mel; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    for (int f = 0; f < n_lin; ++f) {
      const double hz = f * bin_hz;
      double w = 0.0;
      if (hz > left && hz < right)
        w = hz <= center ? (hz - left) / (center - left)
                         : (right - hz) / (right - center);
      fb.weights.at(m, f) = w;
    }
  }

  for (int m = 0; m < n_mel; ++m) {
    bool nonzero = false;
    for (int f = 0; f < n_lin; ++f) nonzero = nonzero || fb.weights.at(m, f) > 0.0;
    if (!nonzero)
      throw InvalidConfigError("mel filter " + std::to_string(m) +
                               " covers no linear bin; reduce n_mel");
  }

  for (int f = 0; f < n_lin; ++f) {
    double sum = 0.0;
    for (int m = 0; m < n_mel; ++m) sum += fb.weights.at(m, f);
    if (sum > 0.0)
      for (int m = 0; m < n_mel; ++m) fb.interp.at(f, m) = fb.weights.at(m, f) / sum;
  }
  return fb;
}

// [frames, n_lin] magnitudes -> [frames, n_mel]; per-frame product with the
// filter bank.
inline Tensor<double> to_mel(const Tensor<double>& mag, const MelFilterBank& fb) {
  if (mag.rank() != 2 || mag.dim(1) != fb.n_lin)
    throw InvalidInputError("to_mel expects [frames, n_lin] input");
  for (std::size_t i = 0; i < mag.size(); ++i)
    if (!(mag[i] >= 0.0)) throw InvalidInputError("to_mel expects nonnegative input");

  const int frames = mag.dim(0);
  Tensor<double> out({frames, fb.n_mel});
  for (int t = 0; t < frames; ++t)
    for (int m = 0; m < fb.n_mel; ++m) {
      double acc = 0.0;
      for (int f = 0; f < fb.n_lin; ++f) acc += fb.weights.at(m, f) * mag.at(t, f);
      out.at(t, m) = acc;
    }
  return out;
}

inline Tensor<double> log_compress(const Tensor<double>& mel_mag) {
  Tensor<double> out(mel_mag.shape());
  for (std::size_t i = 0; i < mel_mag.size(); ++i) {
    if (!(mel_mag[i] >= 0.0))
      throw InvalidInputError("log_compress expects nonnegative input");
    out[i] = std::log(mel_mag[i] + kEpsLog);
  }
  return out;
}

// Mel gains -> linear gains through the normalized filter-bank transpose,
// clamped back to [0,1].
inline GainTensor interpolate_gains(const GainTensor& g_mel, const MelFilterBank& fb) {
  if (g_mel.scale != GainScale::kMel)
    throw InvalidInputError("interpolate_gains expects Mel-scale gains");
  if (g_mel.bands() != fb.n_mel)
    throw InvalidInputError("gain bands do not match filter bank");
  g_mel.check_range();

  const int frames = g_mel.frames();
  GainTensor out;
  out.scale = GainScale::kLinear;
  out.values = Tensor<double>({frames, fb.n_lin});
  for (int t = 0; t < frames; ++t)
    for (int f = 0; f < fb.n_lin; ++f) {
      double acc = 0.0;
      for (int m = 0; m < fb.n_mel; ++m)
        acc += fb.interp.at(f, m) * g_mel.values.at(t, m);
      out.values.at(t, f) = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

// |S| / (|X| + eps), clipped to [0,1]. The clip matters under destructive
// interference where the raw ratio exceeds 1.
inline GainTensor oracle_gains(const Tensor<double>& clean_mag,
                               const Tensor<double>& noisy_mag, GainScale scale) {
  if (!clean_mag.same_shape(noisy_mag))
    throw InvalidInputError("oracle_gains shape mismatch");
  if (clean_mag.rank() != 2) throw InvalidInputError("oracle_gains expects 2-D input");
  for (std::size_t i = 0; i < clean_mag.size(); ++i)
    if (!(clean_mag[i] >= 0.0) || !(noisy_mag[i] >= 0.0))
      throw InvalidInputError("oracle_gains expects nonnegative magnitudes");

  GainTensor g;
  g.scale = scale;
  g.values = Tensor<double>(clean_mag.shape());
  for (std::size_t i = 0; i < clean_mag.size(); ++i)
    g.values[i] = std::clamp(clean_mag[i] / (noisy_mag[i] + kEpsDiv), 0.0, 1.0);
  return g;
}

// Scale the first `bands` bins of each frame by linear gains; bins past the
// gain width (the Nyquist bin) pass through with unity gain.
inline ComplexSpectrogram apply_gain_mask(const ComplexSpectrogram& spec,
                                          const GainTensor& gains) {
  if (gains.scale != GainScale::kLinear)
    throw InvalidInputError("apply_gain_mask expects linear-scale gains");
  if (gains.frames() != spec.frames || gains.bands() > spec.bins)
    throw InvalidInputError("gain shape does not match spectrogram");

  ComplexSpectrogram out = spec;
  for (int t = 0; t < spec.frames; ++t)
    for (int f = 0; f < gains.bands(); ++f) out.at(t, f) *= gains.values.at(t, f);
  return out;
}

}  // namespace melmask2
