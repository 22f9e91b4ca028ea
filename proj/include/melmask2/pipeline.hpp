#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/fft.hpp"
#include "melmask2/logging.hpp"
#include "melmask2/mel.hpp"
#include "melmask2/nn.hpp"
#include "melmask2/nn_tape.hpp"
#include "melmask2/stft.hpp"
#include "melmask2/wav.hpp"
#include "melmask2/weights_io.hpp"

namespace melmask2 {

// g' = g sin((pi/2) g): contracts low gains, preserves the endpoints.
inline double sin_postfilter_value(double g) {
  return g * std::sin(std::numbers::pi / 2.0 * g);
}

inline GainTensor sin_postfilter(const GainTensor& g_hat) {
  g_hat.check_range();
  GainTensor out = g_hat;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = sin_postfilter_value(out.values[i]);
  return out;
}

enum class PipelineMode { kStage1Only, kTwoStage, kStage2OnlyComplex };

inline const char* mode_name(PipelineMode m) {
  switch (m) {
    case PipelineMode::kStage1Only: return "stage1_only";
    case PipelineMode::kTwoStage: return "two_stage";
    case PipelineMode::kStage2OnlyComplex: return "stage2_only_complex";
  }
  return "two_stage";
}

inline PipelineMode mode_from(const std::string& s) {
  if (s == "stage1_only") return PipelineMode::kStage1Only;
  if (s == "two_stage") return PipelineMode::kTwoStage;
  if (s == "stage2_only_complex") return PipelineMode::kStage2OnlyComplex;
  throw InvalidConfigError("unknown pipeline mode: " + s);
}

struct PipelineConfig {
  PipelineMode mode = PipelineMode::kTwoStage;
  bool postfilter = false;
  StftConfig stft;
  std::string stage1_weights;
  std::string stage2_weights;
  // Diagnostic: replace stage-1 gains with 1.0 everywhere (identity mask).
  bool force_unity_gains = false;
};

// Single-owner streaming enhancer. Each accepted hop-sized chunk yields a
// hop-sized output chunk one hop behind the input: algorithmic latency is
// window_len - hop = 10 ms beyond the current chunk. Weights may be shared;
// all mutable state (rings, GRU hidden) lives here.
class Enhancer {
 public:
  Enhancer(const PipelineConfig& cfg, ModelGraph<float> stage1,
           ModelGraph<float> stage2)
      : cfg_(cfg), s1_(std::move(stage1)), s2_(std::move(stage2)) {
    cfg_.stft.validate();
    const bool need_s1 = cfg_.mode != PipelineMode::kStage2OnlyComplex;
    const bool need_s2 = cfg_.mode != PipelineMode::kStage1Only;
    if (need_s1 && !cfg_.force_unity_gains) {
      if (s1_.stage != 1) throw InvalidConfigError("stage-1 weights expected");
      if (s1_.in_bands != 64) throw InvalidConfigError("stage-1 must take 64 bands");
    }
    if (need_s2 && s2_.stage != 2)
      throw InvalidConfigError("stage-2 weights expected");
    fb_ = build_mel_filterbank(64, cfg_.stft.n_bins_used, kEngineSampleRate);
    window_ = make_hann(cfg_.stft.window_len);
    reset();
  }

  explicit Enhancer(const PipelineConfig& cfg)
      : Enhancer(cfg, load_stage(cfg, 1), load_stage(cfg, 2)) {}

  const PipelineConfig& config() const { return cfg_; }

  void reset() {
    in_buf_.assign(static_cast<std::size_t>(cfg_.stft.window_len), 0.0);
    acc_.assign(static_cast<std::size_t>(cfg_.stft.window_len), 0.0);
    cov_.assign(static_cast<std::size_t>(cfg_.stft.window_len), 0.0);
    chunks_seen_ = 0;
    s1_.reset_state();
    s2_.reset_state();
  }

  // One hop in, one hop out (zeros until the first full window is buffered).
  std::vector<double> enhance_frame(const std::vector<double>& chunk) {
    const int hop = cfg_.stft.hop;
    const int win = cfg_.stft.window_len;
    if (static_cast<int>(chunk.size()) != hop)
      throw InvalidInputError("chunk must be exactly one hop long");

    std::copy(in_buf_.begin() + hop, in_buf_.end(), in_buf_.begin());
    std::copy(chunk.begin(), chunk.end(), in_buf_.end() - hop);
    ++chunks_seen_;
    if (chunks_seen_ < 2) return std::vector<double>(static_cast<std::size_t>(hop), 0.0);

    const std::vector<std::complex<double>> enhanced = process_frame(in_buf_);

    // Synthesize and overlap-add with actual coverage tracking, matching the
    // batch istft normalization sample for sample.
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg_.stft.fft_size));
    const int nyq = cfg_.stft.fft_size / 2;
    for (int f = 0; f <= nyq; ++f) buf[static_cast<std::size_t>(f)] = enhanced[static_cast<std::size_t>(f)];
    for (int f = nyq + 1; f < cfg_.stft.fft_size; ++f)
      buf[static_cast<std::size_t>(f)] = std::conj(enhanced[static_cast<std::size_t>(cfg_.stft.fft_size - f)]);
    fft_inplace(buf, true);
    for (int n = 0; n < win; ++n) {
      acc_[static_cast<std::size_t>(n)] += buf[static_cast<std::size_t>(n)].real() /
                                           cfg_.stft.fft_size * window_[static_cast<std::size_t>(n)];
      cov_[static_cast<std::size_t>(n)] += window_[static_cast<std::size_t>(n)] * window_[static_cast<std::size_t>(n)];
    }

    std::vector<double> out(static_cast<std::size_t>(hop));
    for (int n = 0; n < hop; ++n)
      out[static_cast<std::size_t>(n)] =
          cov_[static_cast<std::size_t>(n)] > 1e-12
              ? acc_[static_cast<std::size_t>(n)] / cov_[static_cast<std::size_t>(n)]
              : 0.0;
    std::copy(acc_.begin() + hop, acc_.end(), acc_.begin());
    std::fill(acc_.end() - hop, acc_.end(), 0.0);
    std::copy(cov_.begin() + hop, cov_.end(), cov_.begin());
    std::fill(cov_.end() - hop, cov_.end(), 0.0);
    return out;
  }

  // Whole-signal reference path: batch STFT, batch model forward, batch
  // weighted overlap-add. Output is trimmed/padded to the input length.
  AudioBuffer enhance_offline(const AudioBuffer& audio) {
    const StftConfig& cfg = cfg_.stft;
    const ComplexSpectrogram spec_x = stft(audio, cfg);
    const Tensor<double> mag_x = magnitudes(spec_x, cfg.n_bins_used);

    GainTensor g_lin = batch_gains(mag_x, spec_x.frames);
    ComplexSpectrogram est = apply_gain_mask(spec_x, g_lin);

    if (cfg_.mode != PipelineMode::kStage1Only) {
      const ComplexSpectrogram& base =
          cfg_.mode == PipelineMode::kTwoStage ? est : spec_x;
      Tensor<float> feats({spec_x.frames, 4, cfg.n_bins_used});
      for (int t = 0; t < spec_x.frames; ++t)
        for (int f = 0; f < cfg.n_bins_used; ++f) {
          feats.at(t, 0, f) = static_cast<float>(base.at(t, f).real());
          feats.at(t, 1, f) = static_cast<float>(base.at(t, f).imag());
          feats.at(t, 2, f) = static_cast<float>(spec_x.at(t, f).real());
          feats.at(t, 3, f) = static_cast<float>(spec_x.at(t, f).imag());
        }
      const Tensor<float> head = forward_batch(s2_, feats);
      ComplexSpectrogram refined = base;
      for (int t = 0; t < spec_x.frames; ++t)
        for (int f = 0; f < cfg.n_bins_used; ++f)
          refined.at(t, f) += std::complex<double>(head.at(t, 0, f), head.at(t, 1, f));
      est = std::move(refined);
    }

    AudioBuffer synth = istft(est);
    synth.samples.resize(audio.size(), 0.0);
    return synth;
  }

  ModelGraph<float>& stage1() { return s1_; }
  ModelGraph<float>& stage2() { return s2_; }

 private:
  static ModelGraph<float> load_stage(const PipelineConfig& cfg, int stage) {
    if (stage == 1) {
      if (cfg.mode == PipelineMode::kStage2OnlyComplex || cfg.force_unity_gains)
        return ModelGraph<float>{};
      if (cfg.stage1_weights.empty())
        throw InvalidConfigError("stage-1 weight path required for this mode");
      return load_weights<float>(cfg.stage1_weights);
    }
    if (cfg.mode == PipelineMode::kStage1Only) return ModelGraph<float>{};
    if (cfg.stage2_weights.empty())
      throw InvalidConfigError("stage-2 weight path required for this mode");
    return load_weights<float>(cfg.stage2_weights);
  }

  // Gains for one frame of linear magnitudes (streaming path).
  std::vector<double> frame_gains(const std::vector<std::complex<double>>& spec) {
    const int bands = cfg_.stft.n_bins_used;
    std::vector<double> g(static_cast<std::size_t>(bands), 1.0);
    if (cfg_.force_unity_gains) return g;

    Tensor<float> feat({1, 64});
    for (int m = 0; m < 64; ++m) {
      double acc = 0.0;
      for (int f = 0; f < bands; ++f)
        acc += fb_.weights.at(m, f) * std::abs(spec[static_cast<std::size_t>(f)]);
      feat.at(0, m) = static_cast<float>(std::log(acc + kEpsLog));
    }
    const Tensor<float> gains = s1_.forward_frame(feat);
    for (int f = 0; f < bands; ++f) {
      double acc = 0.0;
      for (int m = 0; m < 64; ++m)
        acc += fb_.interp.at(f, m) * static_cast<double>(gains[static_cast<std::size_t>(m)]);
      acc = std::clamp(acc, 0.0, 1.0);
      if (cfg_.postfilter) acc = sin_postfilter_value(acc);
      g[static_cast<std::size_t>(f)] = acc;
    }
    return g;
  }

  // Batch-path gains over all frames.
  GainTensor batch_gains(const Tensor<double>& mag_x, int frames) {
    const int bands = cfg_.stft.n_bins_used;
    GainTensor g_lin;
    g_lin.scale = GainScale::kLinear;
    g_lin.values = Tensor<double>({frames, bands});
    if (cfg_.force_unity_gains || cfg_.mode == PipelineMode::kStage2OnlyComplex) {
      g_lin.values.fill(1.0);
      return g_lin;
    }

    Tensor<float> feats({frames, 1, 64});
    const Tensor<double> mel = to_mel(mag_x, fb_);
    for (int t = 0; t < frames; ++t)
      for (int m = 0; m < 64; ++m)
        feats.at(t, 0, m) = static_cast<float>(std::log(mel.at(t, m) + kEpsLog));
    const Tensor<float> gains = forward_batch(s1_, feats);

    for (int t = 0; t < frames; ++t)
      for (int f = 0; f < bands; ++f) {
        double acc = 0.0;
        for (int m = 0; m < 64; ++m)
          acc += fb_.interp.at(f, m) * static_cast<double>(gains.at(t, m));
        acc = std::clamp(acc, 0.0, 1.0);
        if (cfg_.postfilter) acc = sin_postfilter_value(acc);
        g_lin.values.at(t, f) = acc;
      }
    return g_lin;
  }

  // Full per-frame path: analysis, gains, optional complex refinement.
  std::vector<std::complex<double>> process_frame(const std::vector<double>& frame) {
    const StftConfig& cfg = cfg_.stft;
    const int bins = cfg.n_bins_total();
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
    for (int n = 0; n < cfg.window_len; ++n)
      buf[static_cast<std::size_t>(n)] = {frame[static_cast<std::size_t>(n)] * window_[static_cast<std::size_t>(n)], 0.0};
    for (int n = cfg.window_len; n < cfg.fft_size; ++n) buf[static_cast<std::size_t>(n)] = {0.0, 0.0};
    fft_inplace(buf, false);
    std::vector<std::complex<double>> spec(buf.begin(), buf.begin() + bins);

    std::vector<std::complex<double>> est = spec;
    if (cfg_.mode != PipelineMode::kStage2OnlyComplex) {
      const std::vector<double> g = frame_gains(spec);
      for (int f = 0; f < cfg.n_bins_used; ++f) est[static_cast<std::size_t>(f)] *= g[static_cast<std::size_t>(f)];
      // Nyquist bin rides through with unity gain.
    }

    if (cfg_.mode != PipelineMode::kStage1Only) {
      Tensor<float> feat({4, cfg.n_bins_used});
      for (int f = 0; f < cfg.n_bins_used; ++f) {
        feat.at(0, f) = static_cast<float>(est[static_cast<std::size_t>(f)].real());
        feat.at(1, f) = static_cast<float>(est[static_cast<std::size_t>(f)].imag());
        feat.at(2, f) = static_cast<float>(spec[static_cast<std::size_t>(f)].real());
        feat.at(3, f) = static_cast<float>(spec[static_cast<std::size_t>(f)].imag());
      }
      const Tensor<float> head = s2_.forward_frame(feat);
      for (int f = 0; f < cfg.n_bins_used; ++f)
        est[static_cast<std::size_t>(f)] += std::complex<double>(head.at(0, f), head.at(1, f));
    }
    return est;
  }

  PipelineConfig cfg_;
  ModelGraph<float> s1_;
  ModelGraph<float> s2_;
  MelFilterBank fb_;
  std::vector<double> window_;
  std::vector<double> in_buf_;
  std::vector<double> acc_;
  std::vector<double> cov_;
  long chunks_seen_ = 0;
};

struct EnhanceSummary {
  int frames = 0;
  double rtf = 0.0;
};

// Stream a WAV file through the enhancer; output length equals input length
// (the tail is flushed with a zero chunk).
inline EnhanceSummary enhance_file(const std::string& in_path,
                                   const std::string& out_path, Enhancer& enh) {
  const AudioBuffer in = wav_read(in_path);
  const int hop = enh.config().stft.hop;
  if (in.size() < static_cast<std::size_t>(2 * hop))
    throw InvalidInputError("input shorter than one analysis window");

  enh.reset();
  std::vector<double> out;
  out.reserve(in.size() + hop);
  std::vector<double> chunk(static_cast<std::size_t>(hop), 0.0);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t pos = 0;
  int frames = 0;
  while (pos < in.size()) {
    const std::size_t n = std::min(static_cast<std::size_t>(hop), in.size() - pos);
    std::fill(chunk.begin(), chunk.end(), 0.0);
    std::copy(in.samples.begin() + pos, in.samples.begin() + pos + n, chunk.begin());
    const std::vector<double> y = enh.enhance_frame(chunk);
    out.insert(out.end(), y.begin(), y.end());
    pos += n;
    ++frames;
  }
  std::fill(chunk.begin(), chunk.end(), 0.0);
  const std::vector<double> tail = enh.enhance_frame(chunk);
  out.insert(out.end(), tail.begin(), tail.end());
  const auto t1 = std::chrono::steady_clock::now();

  out.resize(in.size(), 0.0);
  wav_write(out_path, AudioBuffer(std::move(out), in.sample_rate));

  EnhanceSummary s;
  s.frames = frames;
  s.rtf = std::chrono::duration<double>(t1 - t0).count() / in.duration_s();
  log_info("enhanced " + in_path + " (" + std::to_string(frames) + " chunks, rtf " +
           std::to_string(s.rtf) + ")");
  return s;
}

struct RtfReport {
  int frames = 0;
  double mean_frame_ms = 0.0;
  double p95_frame_ms = 0.0;
  double rtf = 0.0;
  double frames_per_s = 0.0;
  double frame_budget_ms = 10.0;

  std::string to_text() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "frames=%d mean=%.3f ms p95=%.3f ms budget=%.1f ms rtf=%.3f "
                  "frames/s=%.0f",
                  frames, mean_frame_ms, p95_frame_ms, frame_budget_ms, rtf,
                  frames_per_s);
    return buf;
  }
};

// Steady-state per-frame wall time over synthetic input.
inline RtfReport bench_rtf(Enhancer& enh, double seconds, std::uint64_t seed = 1) {
  const int hop = enh.config().stft.hop;
  const int n_frames = std::max(8, static_cast<int>(seconds * kEngineSampleRate / hop));
  std::mt19937_64 rng = named_rng(seed, "bench-rtf");
  std::normal_distribution<double> gauss(0.0, 0.1);

  enh.reset();
  std::vector<double> chunk(static_cast<std::size_t>(hop));
  std::vector<double> times_ms;
  times_ms.reserve(static_cast<std::size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    for (double& v : chunk) v = gauss(rng);
    const auto t0 = std::chrono::steady_clock::now();
    volatile double sink = enh.enhance_frame(chunk)[0];
    (void)sink;
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= 4)  // skip warm-up frames
      times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  std::vector<double> sorted = times_ms;
  std::sort(sorted.begin(), sorted.end());
  RtfReport r;
  r.frames = static_cast<int>(times_ms.size());
  double sum = 0.0;
  for (double v : times_ms) sum += v;
  r.mean_frame_ms = sum / static_cast<double>(times_ms.size());
  r.p95_frame_ms = sorted[static_cast<std::size_t>(0.95 * (sorted.size() - 1))];
  r.frame_budget_ms = 1000.0 * hop / kEngineSampleRate;
  r.rtf = r.mean_frame_ms / r.frame_budget_ms;
  r.frames_per_s = 1000.0 / r.mean_frame_ms;
  return r;
}

}  // namespace melmask2
