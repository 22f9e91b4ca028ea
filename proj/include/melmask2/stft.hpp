#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/fft.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2 {

// Analysis/synthesis parameters. The engine default is a 640-sample periodic
// Hann at 50% overlap, zero-padded to a 1024-point transform; the model-facing
// view is the first 512 bins, the remaining one-sided bin (Nyquist) rides
// along with unity gain.
struct StftConfig {
  int window_len = 640;
  int hop = 320;
  int fft_size = 1024;
  int n_bins_used = 512;

  int n_bins_total() const { return fft_size / 2 + 1; }

  void validate() const {
    if (window_len <= 0 || window_len % 2 != 0)
      throw InvalidConfigError("window_len must be even and > 0");
    if (hop != window_len / 2)
      throw InvalidConfigError("hop must equal window_len / 2");
    if (fft_size < window_len || (fft_size & (fft_size - 1)) != 0)
      throw InvalidConfigError("fft_size must be a power of two >= window_len");
    if (n_bins_used <= 0 || n_bins_used > n_bins_total())
      throw InvalidConfigError("n_bins_used out of range");
  }

  bool operator==(const StftConfig&) const = default;
};

// Periodic (DFT-even) Hann; satisfies constant overlap-add at hop N/2.
inline std::vector<double> make_hann(int window_len) {
  if (window_len <= 0 || window_len % 2 != 0)
    throw InvalidConfigError("hann window length must be even and > 0");
  std::vector<double> w(static_cast<std::size_t>(window_len));
  for (int n = 0; n < window_len; ++n)
    w[static_cast<std::size_t>(n)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / window_len));
  return w;
}

struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;  // one-sided: fft_size / 2 + 1
  std::vector<std::complex<double>> data;  // row-major [frames][bins]
  StftConfig config;

  std::complex<double>& at(int t, int f) {
    return data[static_cast<std::size_t>(t) * bins + f];
  }
  const std::complex<double>& at(int t, int f) const {
    return data[static_cast<std::size_t>(t) * bins + f];
  }

  void check_shape_match(const ComplexSpectrogram& other) const {
    if (frames != other.frames || bins != other.bins)
      throw InvalidInputError("spectrogram shape mismatch");
  }
};

inline int stft_frame_count(std::size_t n_samples, const StftConfig& cfg) {
  if (n_samples < static_cast<std::size_t>(cfg.window_len)) return 0;
  return static_cast<int>((n_samples - cfg.window_len) / cfg.hop) + 1;
}

// Frame t covers samples [t*hop, t*hop + window_len); no center padding,
// trailing partial frame dropped.
inline ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& cfg) {
  cfg.validate();
  if (audio.sample_rate != kEngineSampleRate)
    throw FormatError("stft expects " + std::to_string(kEngineSampleRate) +
                      " Hz input, got " + std::to_string(audio.sample_rate));
  if (audio.size() < static_cast<std::size_t>(cfg.window_len))
    throw InvalidInputError("input shorter than one analysis window");

  const std::vector<double> window = make_hann(cfg.window_len);
  const int frames = stft_frame_count(audio.size(), cfg);
  const int bins = cfg.n_bins_total();

  ComplexSpectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.config = cfg;
  spec.data.assign(static_cast<std::size_t>(frames) * bins, {0.0, 0.0});

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      buf[static_cast<std::size_t>(n)] = {audio.samples[start + n] * window[n], 0.0};
    for (int n = cfg.window_len; n < cfg.fft_size; ++n)
      buf[static_cast<std::size_t>(n)] = {0.0, 0.0};
    fft_inplace(buf, /*inverse=*/false);
    for (int f = 0; f < bins; ++f) spec.at(t, f) = buf[static_cast<std::size_t>(f)];
  }
  return spec;
}

// Squared-window coverage for weighted overlap-add normalization.
inline std::vector<double> ola_coverage(int frames, const StftConfig& cfg) {
  const std::vector<double> window = make_hann(cfg.window_len);
  const std::size_t out_len =
      static_cast<std::size_t>(frames - 1) * cfg.hop + cfg.window_len;
  std::vector<double> cov(out_len, 0.0);
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      cov[start + n] += window[n] * window[n];
  }
  return cov;
}

// Weighted overlap-add inverse: synthesis re-applies the Hann and divides by
// accumulated squared-window coverage. Exact on every sample whose coverage
// is bounded away from zero (all but the outermost window tails).
inline AudioBuffer istft(const ComplexSpectrogram& spec) {
  spec.config.validate();
  if (spec.bins != spec.config.n_bins_total())
    throw InvalidConfigError("spectrogram bins do not match its config");
  if (spec.frames <= 0) throw InvalidInputError("empty spectrogram");

  const StftConfig& cfg = spec.config;
  const std::vector<double> window = make_hann(cfg.window_len);
  const std::size_t out_len =
      static_cast<std::size_t>(spec.frames - 1) * cfg.hop + cfg.window_len;

  std::vector<double> acc(out_len, 0.0);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  const int nyq = cfg.fft_size / 2;
  for (int t = 0; t < spec.frames; ++t) {
    for (int f = 0; f <= nyq; ++f) buf[static_cast<std::size_t>(f)] = spec.at(t, f);
    for (int f = nyq + 1; f < cfg.fft_size; ++f)
      buf[static_cast<std::size_t>(f)] = std::conj(spec.at(t, cfg.fft_size - f));
    fft_inplace(buf, /*inverse=*/true);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      acc[start + n] += buf[static_cast<std::size_t>(n)].real() /
                        cfg.fft_size * window[static_cast<std::size_t>(n)];
  }

  const std::vector<double> cov = ola_coverage(spec.frames, cfg);
  for (std::size_t i = 0; i < out_len; ++i)
    acc[i] = cov[i] > 1e-12 ? acc[i] / cov[i] : 0.0;
  return AudioBuffer(std::move(acc), kEngineSampleRate);
}

// Magnitudes of the first `bands` bins as a [frames x bands] matrix.
inline Tensor<double> magnitudes(const ComplexSpectrogram& spec, int bands) {
  Tensor<double> mag({spec.frames, bands});
  for (int t = 0; t < spec.frames; ++t)
    for (int f = 0; f < bands; ++f) mag.at(t, f) = std::abs(spec.at(t, f));
  return mag;
}

}  // namespace melmask2
