#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "melmask2/autodiff.hpp"
#include "melmask2/autodiff_nn.hpp"
#include "melmask2/dataset.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/logging.hpp"
#include "melmask2/losses.hpp"
#include "melmask2/metrics.hpp"
#include "melmask2/nn.hpp"
#include "melmask2/nn_tape.hpp"
#include "melmask2/optim.hpp"
#include "melmask2/pipeline.hpp"
#include "melmask2/stft.hpp"
#include "melmask2/tape_dsp.hpp"

namespace melmask2 {

enum class SchemeId {
  kJoint,
  kS1LgS2,
  kS1LgJoint,
  kS1LgS2Joint,
  kS1L1S2,
  kS1L1Joint,
  kS1L1S2Joint,
};

inline const std::vector<std::pair<SchemeId, std::string>>& scheme_table() {
  static const std::vector<std::pair<SchemeId, std::string>> table = {
      {SchemeId::kJoint, "joint"},
      {SchemeId::kS1LgS2, "s1Lg_s2"},
      {SchemeId::kS1LgJoint, "s1Lg_joint"},
      {SchemeId::kS1LgS2Joint, "s1Lg_s2_joint"},
      {SchemeId::kS1L1S2, "s1L1_s2"},
      {SchemeId::kS1L1Joint, "s1L1_joint"},
      {SchemeId::kS1L1S2Joint, "s1L1_s2_joint"},
  };
  return table;
}

inline std::string scheme_name(SchemeId id) {
  for (const auto& [sid, name] : scheme_table())
    if (sid == id) return name;
  throw InvalidConfigError("unknown scheme");
}

inline SchemeId scheme_from(const std::string& name) {
  for (const auto& [sid, sname] : scheme_table())
    if (sname == name) return sid;
  throw InvalidConfigError("unknown scheme: " + name);
}

enum class Stage1Loss { kLg, kL1 };

struct TrainConfig {
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  int steps_per_phase = 160;
  int batch_frames = 32;
  double beta = kBetaDefault;
  double p = 0.5;  // gain power factor for the Lg branch
  bool postfilter_in_training = false;
  StftConfig stft;
  std::vector<double> eval_snrs = {0.0, 10.0};
  int eval_pairs = 4;

  void validate() const {
    if (learning_rate <= 0.0) throw InvalidConfigError("learning_rate must be > 0");
    if (steps_per_phase < 0) throw InvalidConfigError("steps_per_phase must be >= 0");
    if (batch_frames <= 0) throw InvalidConfigError("batch_frames must be > 0");
    if (p <= 0.0) throw InvalidConfigError("gain power p must be > 0");
    stft.validate();
  }
};

struct LossCurvePoint {
  std::string scheme;
  std::string phase;
  int step = 0;
  double loss = 0.0;
};

struct SchemeReport {
  std::string scheme;
  std::vector<LossCurvePoint> curve;
  double sisdr_in_db = 0.0;
  double sisdr_out_db = 0.0;
  int phases = 0;
};

namespace train_detail {

// Cached per-pair analysis; mixtures at arbitrary SNR come from spectral
// linearity (X = S + alpha N), so nothing is re-transformed per step.
struct PairCache {
  ComplexSpectrogram clean_spec;
  ComplexSpectrogram noise_spec;
  std::vector<double> clean_samples;
  double alpha_unit = 0.0;  // alpha at 0 dB; alpha(snr) = alpha_unit * 10^(-snr/20)
};

class Sampler {
 public:
  Sampler(const ToyDataset& data, const StftConfig& cfg) : cfg_(cfg) {
    if (data.size() == 0) throw InvalidInputError("empty dataset");
    for (std::size_t i = 0; i < data.size(); ++i) {
      PairCache pc;
      pc.clean_spec = stft(data.clean[i], cfg);
      pc.noise_spec = stft(data.noise[i], cfg);
      pc.clean_samples = data.clean[i].samples;
      const double ps = signal_power(data.clean[i].samples);
      const double pn = signal_power(data.noise[i].samples);
      if (pn <= 0.0) throw InvalidInputError("zero-power noise in dataset");
      pc.alpha_unit = std::sqrt(ps / pn);
      pairs_.push_back(std::move(pc));
    }
  }

  struct Window {
    Tensor<float> feats1;      // [B, 1, 64] log-Mel of |X|
    Tensor<float> x_re, x_im;  // [B, 512]
    Tensor<float> x_nyq_re, x_nyq_im;  // [B, 1]
    Tensor<float> s_re, s_im;  // [B, 512]
    Tensor<float> g_oracle_mel;  // [B, 64]
    Tensor<float> clean_seg;     // [(B-1)*hop + window_len]
    int frames = 0;
  };

  Window sample(std::mt19937_64& rng, int batch_frames, const MelFilterBank& fb) const {
    std::uniform_int_distribution<std::size_t> pair_dist(0, pairs_.size() - 1);
    std::uniform_real_distribution<double> snr_dist(-5.0, 30.0);
    const PairCache& pc = pairs_[pair_dist(rng)];
    const double snr = snr_dist(rng);
    const double alpha = pc.alpha_unit * std::pow(10.0, -snr / 20.0);

    const int total = pc.clean_spec.frames;
    const int b = std::min(batch_frames, total);
    std::uniform_int_distribution<int> start_dist(0, total - b);
    const int t0 = start_dist(rng);
    const int bands = cfg_.n_bins_used;

    Window w;
    w.frames = b;
    w.feats1 = Tensor<float>({b, 1, 64});
    w.x_re = Tensor<float>({b, bands});
    w.x_im = Tensor<float>({b, bands});
    w.x_nyq_re = Tensor<float>({b, 1});
    w.x_nyq_im = Tensor<float>({b, 1});
    w.s_re = Tensor<float>({b, bands});
    w.s_im = Tensor<float>({b, bands});
    w.g_oracle_mel = Tensor<float>({b, 64});

    Tensor<double> mag_x({b, bands}), mag_s({b, bands});
    for (int t = 0; t < b; ++t) {
      for (int f = 0; f <= bands; ++f) {
        const std::complex<double> s = pc.clean_spec.at(t0 + t, f);
        const std::complex<double> x = s + alpha * pc.noise_spec.at(t0 + t, f);
        if (f < bands) {
          w.x_re.at(t, f) = static_cast<float>(x.real());
          w.x_im.at(t, f) = static_cast<float>(x.imag());
          w.s_re.at(t, f) = static_cast<float>(s.real());
          w.s_im.at(t, f) = static_cast<float>(s.imag());
          mag_x.at(t, f) = std::abs(x);
          mag_s.at(t, f) = std::abs(s);
        } else {
          w.x_nyq_re.at(t, 0) = static_cast<float>(x.real());
          w.x_nyq_im.at(t, 0) = static_cast<float>(x.imag());
        }
      }
    }

    const Tensor<double> mel_x = to_mel(mag_x, fb);
    const Tensor<double> mel_s = to_mel(mag_s, fb);
    for (int t = 0; t < b; ++t)
      for (int m = 0; m < 64; ++m) {
        w.feats1.at(t, 0, m) = static_cast<float>(std::log(mel_x.at(t, m) + kEpsLog));
        w.g_oracle_mel.at(t, m) = static_cast<float>(
            std::clamp(mel_s.at(t, m) / (mel_x.at(t, m) + kEpsDiv), 0.0, 1.0));
      }

    const int hop = cfg_.hop;
    const int seg_len = (b - 1) * hop + cfg_.window_len;
    w.clean_seg = Tensor<float>({seg_len});
    const std::size_t s0 = static_cast<std::size_t>(t0) * hop;
    for (int i = 0; i < seg_len; ++i)
      w.clean_seg[static_cast<std::size_t>(i)] =
          static_cast<float>(pc.clean_samples[s0 + i]);
    return w;
  }

 private:
  StftConfig cfg_;
  std::vector<PairCache> pairs_;
};

// Stage-1 forward plus differentiable interpolation/masking; returns the
// masked spectrum (re, im) node pair on the 512 model bands.
struct MaskedSpectrum {
  int re = -1;
  int im = -1;
  GraphOnTape<float> run;
};

inline MaskedSpectrum stage1_masked_spectrum(ad::Tape<float>& tape,
                                             const ModelGraph<float>& s1,
                                             const Sampler::Window& w,
                                             const MelFilterBank& fb,
                                             bool trainable, bool train_mode,
                                             bool postfilter) {
  const int feats = tape.constant(w.feats1);
  MaskedSpectrum ms;
  ms.run = forward_on_tape(tape, s1, feats, train_mode, trainable);

  Tensor<float> interp_t({fb.n_mel, fb.n_lin});  // transpose for right-multiply
  for (int f = 0; f < fb.n_lin; ++f)
    for (int m = 0; m < fb.n_mel; ++m)
      interp_t.at(m, f) = static_cast<float>(fb.interp.at(f, m));
  int g_lin = ad::clamp01(tape, ad::matmul(tape, ms.run.output,
                                           tape.constant(interp_t)));
  if (postfilter) g_lin = ad::sin_postfilter_op(tape, g_lin);

  ms.re = ad::mul(tape, g_lin, tape.constant(w.x_re));
  ms.im = ad::mul(tape, g_lin, tape.constant(w.x_im));
  return ms;
}

// Masked spectrum extended with the unity-gain Nyquist bin, as [B, 2, bins].
inline int with_nyquist(ad::Tape<float>& tape, const Sampler::Window& w, int re,
                        int im) {
  const int re_full = ad::concat_cols(tape, re, tape.constant(w.x_nyq_re));
  const int im_full = ad::concat_cols(tape, im, tape.constant(w.x_nyq_im));
  return ad::stack_channels(tape, {re_full, im_full});
}

inline std::map<std::string, Tensor<float>> collect_grads(
    ad::Tape<float>& tape, const GraphOnTape<float>& run, const ModelGraph<float>& g) {
  std::map<std::string, Tensor<float>> grads;
  for (const auto& [name, node] : run.weight_nodes) {
    if (!g.trainable(name)) continue;
    grads[name] = tape.has_grad(node) ? tape.grad(node)
                                      : Tensor<float>(g.weight(name).shape());
  }
  return grads;
}

}  // namespace train_detail

// ---- phase runners -----------------------------------------------------------

// Stage-1 training on mixtures at random SNR in [-5, 30] dB. Returns the
// per-step loss curve.
inline std::vector<double> train_stage1(ModelGraph<float>& s1, const ToyDataset& data,
                                        Stage1Loss loss_kind, const TrainConfig& cfg,
                                        const std::string& phase_tag = "stage1") {
  cfg.validate();
  const MelFilterBank fb = build_mel_filterbank(64, cfg.stft.n_bins_used,
                                                kEngineSampleRate);
  train_detail::Sampler sampler(data, cfg.stft);
  std::mt19937_64 rng = named_rng(cfg.seed, "train-" + phase_tag);
  AdamState<float> opt;
  std::vector<double> curve;

  for (int step = 0; step < cfg.steps_per_phase; ++step) {
    const auto w = sampler.sample(rng, cfg.batch_frames, fb);
    ad::Tape<float> tape;
    int loss_node = -1;
    train_detail::MaskedSpectrum ms;

    if (loss_kind == Stage1Loss::kLg) {
      const int feats = tape.constant(w.feats1);
      ms.run = forward_on_tape(tape, s1, feats, /*train_mode=*/true,
                               /*weights_trainable=*/true);
      loss_node = ad_losses::gain_loss_op(tape, tape.constant(w.g_oracle_mel),
                                          ms.run.output, static_cast<float>(cfg.p));
    } else {
      ms = train_detail::stage1_masked_spectrum(tape, s1, w, fb, /*trainable=*/true,
                                                /*train_mode=*/true,
                                                cfg.postfilter_in_training);
      const int spec = train_detail::with_nyquist(tape, w, ms.re, ms.im);
      const int est_audio = ad::istft_op(tape, spec, cfg.stft);
      loss_node = ad_losses::l1_loss_op(tape, tape.constant(w.clean_seg), est_audio,
                                        cfg.stft, static_cast<float>(cfg.beta));
    }

    const double loss = tape.val(loss_node)[0];
    if (!std::isfinite(loss))
      throw TrainingError("stage-1 loss diverged", static_cast<std::size_t>(step));
    tape.backward(loss_node);
    adam_step(s1, train_detail::collect_grads(tape, ms.run, s1), opt,
              static_cast<float>(cfg.learning_rate));
    commit_bn_stats(s1, ms.run.bn_stats);
    curve.push_back(loss);
  }
  return curve;
}

// Stage-2 training with stage 1 frozen; loss is L2 on the refined spectrum.
inline std::vector<double> train_stage2(ModelGraph<float>& s2,
                                        const ModelGraph<float>& frozen_s1,
                                        const ToyDataset& data, const TrainConfig& cfg,
                                        const std::string& phase_tag = "stage2") {
  cfg.validate();
  const MelFilterBank fb = build_mel_filterbank(64, cfg.stft.n_bins_used,
                                                kEngineSampleRate);
  train_detail::Sampler sampler(data, cfg.stft);
  std::mt19937_64 rng = named_rng(cfg.seed, "train-" + phase_tag);
  AdamState<float> opt;
  std::vector<double> curve;

  for (int step = 0; step < cfg.steps_per_phase; ++step) {
    const auto w = sampler.sample(rng, cfg.batch_frames, fb);
    ad::Tape<float> tape;
    // Frozen stage 1: constants on the tape, eval-mode batch norm.
    auto ms = train_detail::stage1_masked_spectrum(tape, frozen_s1, w, fb,
                                                   /*trainable=*/false,
                                                   /*train_mode=*/false,
                                                   cfg.postfilter_in_training);
    const int feats2 = ad::stack_channels(
        tape, {ms.re, ms.im, tape.constant(w.x_re), tape.constant(w.x_im)});
    GraphOnTape<float> run2 = forward_on_tape(tape, s2, feats2, /*train_mode=*/true,
                                              /*weights_trainable=*/true);
    const int est_re = ad::add(tape, ad::slice_channel(tape, run2.output, 0), ms.re);
    const int est_im = ad::add(tape, ad::slice_channel(tape, run2.output, 1), ms.im);
    const int loss_node = ad_losses::l2_loss_op(tape, tape.constant(w.s_re),
                                                tape.constant(w.s_im), est_re, est_im,
                                                static_cast<float>(cfg.beta));
    const double loss = tape.val(loss_node)[0];
    if (!std::isfinite(loss))
      throw TrainingError("stage-2 loss diverged", static_cast<std::size_t>(step));
    tape.backward(loss_node);
    adam_step(s2, train_detail::collect_grads(tape, run2, s2), opt,
              static_cast<float>(cfg.learning_rate));
    commit_bn_stats(s2, run2.bn_stats);
    curve.push_back(loss);
  }
  return curve;
}

// Joint training: L2 on the stage-2 output with gradients flowing through the
// complex reassembly, masking, and interpolation into stage 1.
inline std::vector<double> train_joint(ModelGraph<float>& s1, ModelGraph<float>& s2,
                                       const ToyDataset& data, const TrainConfig& cfg,
                                       const std::string& phase_tag = "joint") {
  cfg.validate();
  const MelFilterBank fb = build_mel_filterbank(64, cfg.stft.n_bins_used,
                                                kEngineSampleRate);
  train_detail::Sampler sampler(data, cfg.stft);
  std::mt19937_64 rng = named_rng(cfg.seed, "train-" + phase_tag);
  AdamState<float> opt1, opt2;
  std::vector<double> curve;

  for (int step = 0; step < cfg.steps_per_phase; ++step) {
    const auto w = sampler.sample(rng, cfg.batch_frames, fb);
    ad::Tape<float> tape;
    auto ms = train_detail::stage1_masked_spectrum(tape, s1, w, fb,
                                                   /*trainable=*/true,
                                                   /*train_mode=*/true,
                                                   cfg.postfilter_in_training);
    const int feats2 = ad::stack_channels(
        tape, {ms.re, ms.im, tape.constant(w.x_re), tape.constant(w.x_im)});
    GraphOnTape<float> run2 = forward_on_tape(tape, s2, feats2, /*train_mode=*/true,
                                              /*weights_trainable=*/true);
    const int est_re = ad::add(tape, ad::slice_channel(tape, run2.output, 0), ms.re);
    const int est_im = ad::add(tape, ad::slice_channel(tape, run2.output, 1), ms.im);
    const int loss_node = ad_losses::l2_loss_op(tape, tape.constant(w.s_re),
                                                tape.constant(w.s_im), est_re, est_im,
                                                static_cast<float>(cfg.beta));
    const double loss = tape.val(loss_node)[0];
    if (!std::isfinite(loss))
      throw TrainingError("joint loss diverged", static_cast<std::size_t>(step));
    tape.backward(loss_node);
    adam_step(s1, train_detail::collect_grads(tape, ms.run, s1), opt1,
              static_cast<float>(cfg.learning_rate));
    adam_step(s2, train_detail::collect_grads(tape, run2, s2), opt2,
              static_cast<float>(cfg.learning_rate));
    commit_bn_stats(s1, ms.run.bn_stats);
    commit_bn_stats(s2, run2.bn_stats);
    curve.push_back(loss);
  }
  return curve;
}

// Mean toy SI-SDR before/after enhancement over a pair x SNR grid.
inline std::pair<double, double> toy_sisdr_eval(Enhancer& enh, const ToyDataset& data,
                                                const std::vector<double>& snrs,
                                                int max_pairs) {
  std::vector<double> in_scores, out_scores;
  const std::size_t n = std::min<std::size_t>(data.size(),
                                              static_cast<std::size_t>(max_pairs));
  for (std::size_t i = 0; i < n; ++i)
    for (double snr : snrs) {
      const AudioBuffer mix = mix_at_snr(data.clean[i], data.noise[i], snr);
      const AudioBuffer out = enh.enhance_offline(mix);
      const int hop = enh.config().stft.hop;
      auto trim = [&](const AudioBuffer& a) {
        return AudioBuffer(
            std::vector<double>(a.samples.begin() + hop, a.samples.end() - hop),
            a.sample_rate);
      };
      const AudioBuffer ref = trim(data.clean[i]);
      in_scores.push_back(si_sdr(ref, trim(mix)));
      out_scores.push_back(si_sdr(ref, trim(out)));
    }
  return {mean_ci95(in_scores).mean, mean_ci95(out_scores).mean};
}

// Executes one Table-style scheme: its phases in order, loss curves, and a
// final toy SI-SDR evaluation of the resulting two-stage enhancer.
struct SchemeResult {
  ModelGraph<float> stage1;
  ModelGraph<float> stage2;
  SchemeReport report;
};

inline SchemeResult run_scheme(SchemeId id, const ToyDataset& data,
                               const TrainConfig& cfg) {
  cfg.validate();
  const std::string name = scheme_name(id);
  SchemeResult res;
  res.stage1 = build_stage1<float>(cfg.seed);
  res.stage2 = build_stage2<float>(cfg.seed);
  res.report.scheme = name;

  auto record = [&](const std::string& phase, const std::vector<double>& curve) {
    for (std::size_t i = 0; i < curve.size(); ++i)
      res.report.curve.push_back({name, phase, static_cast<int>(i), curve[i]});
    ++res.report.phases;
    log_info(name + "/" + phase + ": " + std::to_string(curve.size()) + " steps" +
             (curve.empty() ? "" : ", final loss " + std::to_string(curve.back())));
  };

  const bool has_s1_phase = id != SchemeId::kJoint;
  const Stage1Loss s1_loss =
      (id == SchemeId::kS1LgS2 || id == SchemeId::kS1LgJoint ||
       id == SchemeId::kS1LgS2Joint)
          ? Stage1Loss::kLg
          : Stage1Loss::kL1;
  const bool has_s2_phase = id == SchemeId::kS1LgS2 || id == SchemeId::kS1LgS2Joint ||
                            id == SchemeId::kS1L1S2 || id == SchemeId::kS1L1S2Joint;
  const bool has_joint_phase = id == SchemeId::kJoint || id == SchemeId::kS1LgJoint ||
                               id == SchemeId::kS1LgS2Joint ||
                               id == SchemeId::kS1L1Joint ||
                               id == SchemeId::kS1L1S2Joint;

  if (has_s1_phase) {
    const std::string phase = s1_loss == Stage1Loss::kLg ? "stage1_Lg" : "stage1_L1";
    record(phase, train_stage1(res.stage1, data, s1_loss, cfg, name + "-" + phase));
  }
  if (has_s2_phase)
    record("stage2",
           train_stage2(res.stage2, res.stage1, data, cfg, name + "-stage2"));
  if (has_joint_phase)
    record("joint", train_joint(res.stage1, res.stage2, data, cfg, name + "-joint"));

  PipelineConfig pcfg;
  pcfg.mode = PipelineMode::kTwoStage;
  pcfg.postfilter = false;
  pcfg.stft = cfg.stft;
  Enhancer enh(pcfg, res.stage1, res.stage2);
  const auto [in_db, out_db] = toy_sisdr_eval(enh, data, cfg.eval_snrs,
                                              cfg.eval_pairs);
  res.report.sisdr_in_db = in_db;
  res.report.sisdr_out_db = out_db;
  return res;
}

inline void write_scheme_curve_csv(const SchemeReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "scheme,phase,step,loss\n";
  for (const auto& p : r.curve)
    out << p.scheme << ',' << p.phase << ',' << p.step << ',' << p.loss << '\n';
}

inline void append_scheme_summary_csv(const SchemeReport& r, const std::string& path,
                                      bool write_header) {
  std::ofstream out(path, write_header ? std::ios::trunc : std::ios::app);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  if (write_header) out << "scheme,final_sisdr_db\n";
  out << r.scheme << ',' << r.sisdr_out_db << '\n';
}

}  // namespace melmask2
