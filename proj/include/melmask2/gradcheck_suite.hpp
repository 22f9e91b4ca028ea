#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "melmask2/dataset.hpp"
#include "melmask2/losses.hpp"
#include "melmask2/metrics.hpp"
#include "melmask2/nn.hpp"
#include "melmask2/nn_tape.hpp"
#include "melmask2/stft.hpp"
#include "melmask2/tape_dsp.hpp"

namespace melmask2 {

// Finite-difference verification of every training objective, including the
// composite paths through Mel interpolation, masking, and the inverse STFT.
// Everything runs in double precision.

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
};

namespace gradcheck_detail {

struct Fixture {
  ComplexSpectrogram clean;
  ComplexSpectrogram noisy;
  Tensor<double> x_re, x_im;          // [T, 512]
  Tensor<double> x_nyq_re, x_nyq_im;  // [T, 1]
  Tensor<double> s_re, s_im;          // [T, 512]
  Tensor<double> clean_seg;           // audio under the window
  MelFilterBank fb;
  StftConfig cfg;
  int frames = 0;
};

inline Fixture make_fixture(int frames, std::uint64_t seed) {
  Fixture fx;
  fx.cfg = StftConfig{};
  const double dur =
      (static_cast<double>(frames - 1) * fx.cfg.hop + fx.cfg.window_len + 64) /
      kEngineSampleRate;
  const ToyDataset ds = synth_toy_dataset(1, std::max(dur, 0.1), seed);
  const AudioBuffer mix = mix_at_snr(ds.clean[0], ds.noise[0], 0.0);
  fx.clean = stft(ds.clean[0], fx.cfg);
  fx.noisy = stft(mix, fx.cfg);
  fx.frames = std::min(frames, fx.noisy.frames);

  const int bands = fx.cfg.n_bins_used;
  fx.x_re = Tensor<double>({fx.frames, bands});
  fx.x_im = Tensor<double>({fx.frames, bands});
  fx.s_re = Tensor<double>({fx.frames, bands});
  fx.s_im = Tensor<double>({fx.frames, bands});
  fx.x_nyq_re = Tensor<double>({fx.frames, 1});
  fx.x_nyq_im = Tensor<double>({fx.frames, 1});
  for (int t = 0; t < fx.frames; ++t) {
    for (int f = 0; f < bands; ++f) {
      fx.x_re.at(t, f) = fx.noisy.at(t, f).real();
      fx.x_im.at(t, f) = fx.noisy.at(t, f).imag();
      fx.s_re.at(t, f) = fx.clean.at(t, f).real();
      fx.s_im.at(t, f) = fx.clean.at(t, f).imag();
    }
    fx.x_nyq_re.at(t, 0) = fx.noisy.at(t, bands).real();
    fx.x_nyq_im.at(t, 0) = fx.noisy.at(t, bands).imag();
  }

  const int seg = (fx.frames - 1) * fx.cfg.hop + fx.cfg.window_len;
  fx.clean_seg = Tensor<double>({seg});
  for (int i = 0; i < seg; ++i) fx.clean_seg[static_cast<std::size_t>(i)] = ds.clean[0].samples[static_cast<std::size_t>(i)];

  fx.fb = build_mel_filterbank(64, bands, kEngineSampleRate);
  return fx;
}

inline Tensor<double> random_uniform(std::vector<int> shape, double lo, double hi,
                                     std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline Tensor<double> interp_transpose(const MelFilterBank& fb) {
  Tensor<double> it({fb.n_mel, fb.n_lin});
  for (int f = 0; f < fb.n_lin; ++f)
    for (int m = 0; m < fb.n_mel; ++m) it.at(m, f) = fb.interp.at(f, m);
  return it;
}

// Mel gains -> interpolation -> masking -> Nyquist extension -> iSTFT.
inline int masked_resynthesis(ad::Tape<double>& t, int g_mel, const Fixture& fx) {
  const int g_lin =
      ad::clamp01(t, ad::matmul(t, g_mel, t.constant(interp_transpose(fx.fb))));
  const int est_re = ad::mul(t, g_lin, t.constant(fx.x_re));
  const int est_im = ad::mul(t, g_lin, t.constant(fx.x_im));
  const int re_full = ad::concat_cols(t, est_re, t.constant(fx.x_nyq_re));
  const int im_full = ad::concat_cols(t, est_im, t.constant(fx.x_nyq_im));
  const int spec = ad::stack_channels(t, {re_full, im_full});
  return ad::istft_op(t, spec, fx.cfg);
}

}  // namespace gradcheck_detail

inline std::vector<GradSuiteEntry> run_gradcheck_suite(int probes_per_loss,
                                                       std::uint64_t seed,
                                                       int frames = 12) {
  using gradcheck_detail::Fixture;
  using gradcheck_detail::make_fixture;
  using gradcheck_detail::masked_resynthesis;
  using gradcheck_detail::random_uniform;

  const Fixture fx = make_fixture(frames, seed);
  std::mt19937_64 rng = named_rng(seed, "gradcheck-suite");
  std::vector<GradSuiteEntry> out;

  // L_g on random gain pairs.
  {
    const Tensor<double> g = random_uniform({8, 64}, 0.02, 0.98, rng);
    std::vector<Tensor<double>> params = {random_uniform({8, 64}, 0.05, 0.95, rng)};
    LossEval eval = [&g](const std::vector<Tensor<double>>& p,
                         std::vector<Tensor<double>>* grads) {
      ad::Tape<double> t;
      const int gh = t.leaf(p[0]);
      const int loss = ad_losses::gain_loss_op(t, t.constant(g), gh, 0.5);
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(gh)};
      }
      return t.val(loss)[0];
    };
    out.push_back({"L_g", grad_check(eval, params, probes_per_loss, seed + 1)});
  }

  // L_mag / L_asym on random magnitudes.
  for (const bool asym : {false, true}) {
    const Tensor<double> clean = random_uniform({8, 64}, 0.01, 2.0, rng);
    std::vector<Tensor<double>> params = {random_uniform({8, 64}, 0.01, 2.0, rng)};
    LossEval eval = [&clean, asym](const std::vector<Tensor<double>>& p,
                                   std::vector<Tensor<double>>* grads) {
      ad::Tape<double> t;
      const int est = t.leaf(p[0]);
      const int loss = asym
                           ? ad_losses::asym_loss_op(t, t.constant(clean), est, 0.5)
                           : ad_losses::mag_loss_op(t, t.constant(clean), est, 0.5);
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(est)};
      }
      return t.val(loss)[0];
    };
    out.push_back({asym ? "L_asym" : "L_mag",
                   grad_check(eval, params, probes_per_loss, seed + 2 + asym)});
  }

  // L_SI-SNR on random signals.
  {
    const Tensor<double> s = random_uniform({3000}, -0.5, 0.5, rng);
    std::vector<Tensor<double>> params = {random_uniform({3000}, -0.5, 0.5, rng)};
    LossEval eval = [&s](const std::vector<Tensor<double>>& p,
                         std::vector<Tensor<double>>* grads) {
      ad::Tape<double> t;
      const int sh = t.leaf(p[0]);
      const int loss = ad_losses::sisnr_loss_op(t, t.constant(s), sh);
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(sh)};
      }
      return t.val(loss)[0];
    };
    out.push_back({"L_SI-SNR", grad_check(eval, params, probes_per_loss, seed + 4)});
  }

  // L1 through interpolation, masking, and the inverse STFT.
  {
    std::vector<Tensor<double>> params = {
        random_uniform({fx.frames, 64}, 0.1, 0.9, rng)};
    LossEval eval = [&fx](const std::vector<Tensor<double>>& p,
                          std::vector<Tensor<double>>* grads) {
      ad::Tape<double> t;
      const int g_mel = t.leaf(p[0]);
      const int est_audio = masked_resynthesis(t, g_mel, fx);
      const int loss = ad_losses::l1_loss_op(t, t.constant(fx.clean_seg), est_audio,
                                             fx.cfg, 0.5);
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(g_mel)};
      }
      return t.val(loss)[0];
    };
    out.push_back({"L1", grad_check(eval, params, probes_per_loss, seed + 5)});
  }

  // L_phase on random complex spectra.
  {
    const Tensor<double> cre = random_uniform({8, 64}, -1.0, 1.0, rng);
    const Tensor<double> cim = random_uniform({8, 64}, -1.0, 1.0, rng);
    std::vector<Tensor<double>> params = {random_uniform({8, 64}, -1.0, 1.0, rng),
                                          random_uniform({8, 64}, -1.0, 1.0, rng)};
    LossEval eval = [&cre, &cim](const std::vector<Tensor<double>>& p,
                                 std::vector<Tensor<double>>* grads) {
      ad::Tape<double> t;
      const int er = t.leaf(p[0]);
      const int ei = t.leaf(p[1]);
      const int loss = ad_losses::phase_loss_op(t, t.constant(cre), t.constant(cim),
                                                er, ei, 0.5);
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(er), t.grad(ei)};
      }
      return t.val(loss)[0];
    };
    out.push_back({"L_phase", grad_check(eval, params, probes_per_loss, seed + 6)});
  }

  // L2 through interpolation and masking (spectral domain).
  {
    std::vector<Tensor<double>> params = {
        random_uniform({fx.frames, 64}, 0.1, 0.9, rng)};
    LossEval eval = [&fx](const std::vector<Tensor<double>>& p,
                          std::vector<Tensor<double>>* grads) {
      ad::Tape<double> t;
      const int g_mel = t.leaf(p[0]);
      const int g_lin = ad::clamp01(
          t, ad::matmul(t, g_mel,
                        t.constant(gradcheck_detail::interp_transpose(fx.fb))));
      const int est_re = ad::mul(t, g_lin, t.constant(fx.x_re));
      const int est_im = ad::mul(t, g_lin, t.constant(fx.x_im));
      const int loss = ad_losses::l2_loss_op(t, t.constant(fx.s_re),
                                             t.constant(fx.s_im), est_re, est_im, 0.5);
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(g_mel)};
      }
      return t.val(loss)[0];
    };
    out.push_back({"L2", grad_check(eval, params, probes_per_loss, seed + 7)});
  }

  // L1 through the full stage-1 network graph, probing the weights.
  {
    const ModelGraph<double> net = build_stage1<double>(seed + 8);
    Tensor<double> feats({fx.frames, 1, 64});
    {
      const Tensor<double> mag_x = magnitudes(fx.noisy, fx.cfg.n_bins_used);
      Tensor<double> window_mag({fx.frames, fx.cfg.n_bins_used});
      for (int t = 0; t < fx.frames; ++t)
        for (int f = 0; f < fx.cfg.n_bins_used; ++f)
          window_mag.at(t, f) = mag_x.at(t, f);
      const Tensor<double> mel = to_mel(window_mag, fx.fb);
      for (int t = 0; t < fx.frames; ++t)
        for (int m = 0; m < 64; ++m)
          feats.at(t, 0, m) = std::log(mel.at(t, m) + kEpsLog);
    }

    std::vector<std::string> names;
    std::vector<Tensor<double>> params;
    for (const auto& n : net.weight_order)
      if (net.trainable(n)) {
        names.push_back(n);
        params.push_back(net.weight(n));
      }

    LossEval eval = [&](const std::vector<Tensor<double>>& p,
                        std::vector<Tensor<double>>* grads) {
      ModelGraph<double> m = net;
      for (std::size_t i = 0; i < names.size(); ++i) m.weight(names[i]) = p[i];
      ad::Tape<double> t;
      const int in = t.constant(feats);
      GraphOnTape<double> run = forward_on_tape(t, m, in, /*train_mode=*/true,
                                                /*weights_trainable=*/true);
      const int est_audio = masked_resynthesis(t, run.output, fx);
      const int loss = ad_losses::l1_loss_op(t, t.constant(fx.clean_seg), est_audio,
                                             fx.cfg, 0.5);
      if (grads) {
        t.backward(loss);
        grads->clear();
        for (const auto& name : names) {
          const int node = run.weight_nodes.at(name);
          grads->push_back(t.has_grad(node) ? t.grad(node)
                                            : Tensor<double>(m.weight(name).shape()));
        }
      }
      return t.val(loss)[0];
    };
    out.push_back(
        {"L1_stage1_graph", grad_check(eval, params, probes_per_loss, seed + 9)});
  }

  return out;
}

}  // namespace melmask2
