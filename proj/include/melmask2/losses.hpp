#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/autodiff.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/mel.hpp"
#include "melmask2/stft.hpp"
#include "melmask2/tape_dsp.hpp"

namespace melmask2 {

inline constexpr double kSisnrEps = 1e-8;
inline constexpr double kSisnrCapDb = 60.0;
inline constexpr double kBetaDefault = 0.5;  // magnitude power compression
inline constexpr int kLossBands = 512;       // F in the combined time-domain loss

// ---- tape-level loss builders ----------------------------------------------
// These return scalar nodes; training composes them behind the model graphs.

namespace ad_losses {

using ad::Tape;

// Mean over T*F of (g^p - g_hat^p)^2.
template <typename T>
int gain_loss_op(Tape<T>& t, int g, int g_hat, T p) {
  if (p <= T(0)) throw InvalidConfigError("gain power factor p must be > 0");
  if (!t.val(g).same_shape(t.val(g_hat)))
    throw InvalidInputError("gain_loss shape mismatch");
  const int d = ad::sub(t, ad::pow_guarded(t, g, p), ad::pow_guarded(t, g_hat, p));
  return ad::mean_all(t, ad::square(t, d));
}

template <typename T>
int mag_loss_op(Tape<T>& t, int clean_mag, int est_mag, T beta) {
  if (beta <= T(0) || beta > T(1))
    throw InvalidConfigError("compression factor beta must be in (0,1]");
  if (!t.val(clean_mag).same_shape(t.val(est_mag)))
    throw InvalidInputError("mag_loss shape mismatch");
  const int d = ad::sub(t, ad::pow_guarded(t, clean_mag, beta),
                        ad::pow_guarded(t, est_mag, beta));
  return ad::mean_all(t, ad::square(t, d));
}

// Penalizes only under-estimation of the compressed magnitude.
template <typename T>
int asym_loss_op(Tape<T>& t, int clean_mag, int est_mag, T beta) {
  if (beta <= T(0) || beta > T(1))
    throw InvalidConfigError("compression factor beta must be in (0,1]");
  if (!t.val(clean_mag).same_shape(t.val(est_mag)))
    throw InvalidInputError("asym_loss shape mismatch");
  const int d = ad::sub(t, ad::pow_guarded(t, clean_mag, beta),
                        ad::pow_guarded(t, est_mag, beta));
  return ad::mean_all(t, ad::square(t, ad::relu(t, d)));
}

// -10 log10(|kappa s|^2 / |kappa s - s_hat|^2), kappa the optimal scale,
// eps inside both norms, capped to +/-60 dB.
template <typename T>
int sisnr_loss_op(Tape<T>& t, int s, int s_hat) {
  if (!t.val(s).same_shape(t.val(s_hat)))
    throw InvalidInputError("sisnr_loss length mismatch");
  const int ref_energy = ad::sumsq(t, s);
  if (t.val(ref_energy)[0] <= T(0))
    throw InvalidInputError("sisnr_loss target has zero power");
  const int kappa = ad::s_div(t, ad::dot(t, s_hat, s), ref_energy);
  const int target = ad::scale_by_scalar(t, s, kappa);
  const int num = ad::add_scalar(t, ad::sumsq(t, target),
                                 static_cast<T>(kSisnrEps));
  const int den = ad::add_scalar(t, ad::sumsq(t, ad::sub(t, target, s_hat)),
                                 static_cast<T>(kSisnrEps));
  const T db_per_ln = static_cast<T>(-10.0 / std::numbers::ln10);
  const int raw = ad::scale(t, ad::sub(t, ad::s_ln(t, num), ad::s_ln(t, den)),
                            db_per_ln);
  return ad::s_clamp(t, raw, static_cast<T>(-kSisnrCapDb),
                     static_cast<T>(kSisnrCapDb));
}

// Squared complex distance of beta-compressed spectra, averaged over T*F.
// clean/est as (re, im) node pairs of shape [T, F].
template <typename T>
int phase_loss_op(Tape<T>& t, int clean_re, int clean_im, int est_re, int est_im,
                  T exponent) {
  if (!t.val(clean_re).same_shape(t.val(est_re)))
    throw InvalidInputError("phase_loss shape mismatch");
  const auto cs = ad::compress_complex(t, clean_re, clean_im, exponent);
  const auto ce = ad::compress_complex(t, est_re, est_im, exponent);
  const int dr = ad::sub(t, cs.re, ce.re);
  const int di = ad::sub(t, cs.im, ce.im);
  const T inv = T(1) / static_cast<T>(t.val(clean_re).size());
  return ad::scale(t, ad::add(t, ad::sumsq(t, dr), ad::sumsq(t, di)), inv);
}

struct SpectrumNodes {
  int re = -1;
  int im = -1;
};

// One-sided STFT of an audio node, truncated to the loss bands.
template <typename T>
SpectrumNodes spectrum_of(Tape<T>& t, int audio, const StftConfig& cfg, int bands) {
  const int spec = ad::stft_op(t, audio, cfg);
  SpectrumNodes s;
  s.re = ad::slice_cols(t, ad::slice_channel(t, spec, 0), 0, bands);
  s.im = ad::slice_cols(t, ad::slice_channel(t, spec, 1), 0, bands);
  return s;
}

// L1 = (L_mag + L_asym) * F + 2 * L_SI-SNR, magnitudes re-analyzed from both
// time signals on the 512 loss bands.
template <typename T>
int l1_loss_op(Tape<T>& t, int clean_audio, int est_audio, const StftConfig& cfg,
               T beta) {
  const SpectrumNodes cs = spectrum_of(t, clean_audio, cfg, kLossBands);
  const SpectrumNodes es = spectrum_of(t, est_audio, cfg, kLossBands);
  const int mag_c = ad::magnitude(t, cs.re, cs.im);
  const int mag_e = ad::magnitude(t, es.re, es.im);
  const int spectral = ad::add(t, mag_loss_op(t, mag_c, mag_e, beta),
                               asym_loss_op(t, mag_c, mag_e, beta));
  const int sisnr = sisnr_loss_op(t, clean_audio, est_audio);
  return ad::add(t, ad::scale(t, spectral, static_cast<T>(kLossBands)),
                 ad::scale(t, sisnr, T(2)));
}

// L2 = L_mag + L_phase on (re, im) spectrum node pairs.
template <typename T>
int l2_loss_op(Tape<T>& t, int clean_re, int clean_im, int est_re, int est_im,
               T beta) {
  const int mag_c = ad::magnitude(t, clean_re, clean_im);
  const int mag_e = ad::magnitude(t, est_re, est_im);
  return ad::add(t, mag_loss_op(t, mag_c, mag_e, beta),
                 phase_loss_op(t, clean_re, clean_im, est_re, est_im, beta));
}

}  // namespace ad_losses

// ---- value + gradient wrappers ---------------------------------------------

// Scalar loss with named gradients for every differentiated input.
struct LossValue {
  double value = 0.0;
  std::map<std::string, Tensor<double>> grads;
};

namespace loss_detail {

inline Tensor<double> check_mag(const Tensor<double>& m, const char* who) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!(m[i] >= 0.0))
      throw InvalidInputError(std::string(who) + " expects nonnegative magnitudes");
  return m;
}

inline std::pair<Tensor<double>, Tensor<double>> split_complex(
    const ComplexSpectrogram& s, int bands) {
  Tensor<double> re({s.frames, bands}), im({s.frames, bands});
  for (int t = 0; t < s.frames; ++t)
    for (int f = 0; f < bands; ++f) {
      re.at(t, f) = s.at(t, f).real();
      im.at(t, f) = s.at(t, f).imag();
    }
  return {re, im};
}

}  // namespace loss_detail

inline LossValue gain_loss(const GainTensor& g, const GainTensor& g_hat, double p) {
  g.check_range();
  g_hat.check_range();
  ad::Tape<double> t;
  const int gi = t.constant(g.values);
  const int hi = t.leaf(g_hat.values);
  const int loss = ad_losses::gain_loss_op(t, gi, hi, p);
  t.backward(loss);
  return {t.val(loss)[0], {{"g_hat", t.grad(hi)}}};
}

inline LossValue mag_loss(const Tensor<double>& clean_mag,
                          const Tensor<double>& est_mag, double beta) {
  loss_detail::check_mag(clean_mag, "mag_loss");
  loss_detail::check_mag(est_mag, "mag_loss");
  ad::Tape<double> t;
  const int c = t.constant(clean_mag);
  const int e = t.leaf(est_mag);
  const int loss = ad_losses::mag_loss_op(t, c, e, beta);
  t.backward(loss);
  return {t.val(loss)[0], {{"est_mag", t.grad(e)}}};
}

inline LossValue asym_loss(const Tensor<double>& clean_mag,
                           const Tensor<double>& est_mag, double beta) {
  loss_detail::check_mag(clean_mag, "asym_loss");
  loss_detail::check_mag(est_mag, "asym_loss");
  ad::Tape<double> t;
  const int c = t.constant(clean_mag);
  const int e = t.leaf(est_mag);
  const int loss = ad_losses::asym_loss_op(t, c, e, beta);
  t.backward(loss);
  return {t.val(loss)[0], {{"est_mag", t.grad(e)}}};
}

inline LossValue sisnr_loss(const AudioBuffer& s, const AudioBuffer& s_hat) {
  ad::Tape<double> t;
  const int si = t.constant(Tensor<double>({static_cast<int>(s.size())}, s.samples));
  const int hi = t.leaf(Tensor<double>({static_cast<int>(s_hat.size())}, s_hat.samples));
  const int loss = ad_losses::sisnr_loss_op(t, si, hi);
  t.backward(loss);
  return {t.val(loss)[0], {{"s_hat", t.grad(hi)}}};
}

inline LossValue loss_L1(const AudioBuffer& clean, const AudioBuffer& est,
                         const StftConfig& cfg, double beta = kBetaDefault) {
  if (clean.size() != est.size()) throw InvalidInputError("loss_L1 length mismatch");
  ad::Tape<double> t;
  const int c = t.constant(Tensor<double>({static_cast<int>(clean.size())}, clean.samples));
  const int e = t.leaf(Tensor<double>({static_cast<int>(est.size())}, est.samples));
  const int loss = ad_losses::l1_loss_op(t, c, e, cfg, beta);
  t.backward(loss);
  return {t.val(loss)[0], {{"est", t.grad(e)}}};
}

inline LossValue phase_loss(const ComplexSpectrogram& clean,
                            const ComplexSpectrogram& est, double exponent) {
  clean.check_shape_match(est);
  auto [cre, cim] = loss_detail::split_complex(clean, clean.bins);
  auto [ere, eim] = loss_detail::split_complex(est, est.bins);
  ad::Tape<double> t;
  const int cr = t.constant(cre), ci = t.constant(cim);
  const int er = t.leaf(ere), ei = t.leaf(eim);
  const int loss = ad_losses::phase_loss_op(t, cr, ci, er, ei, exponent);
  t.backward(loss);
  return {t.val(loss)[0], {{"est_re", t.grad(er)}, {"est_im", t.grad(ei)}}};
}

inline LossValue loss_L2(const ComplexSpectrogram& clean, const ComplexSpectrogram& est,
                         double beta = kBetaDefault) {
  clean.check_shape_match(est);
  const int bands = std::min(kLossBands, clean.bins);
  auto [cre, cim] = loss_detail::split_complex(clean, bands);
  auto [ere, eim] = loss_detail::split_complex(est, bands);
  ad::Tape<double> t;
  const int cr = t.constant(cre), ci = t.constant(cim);
  const int er = t.leaf(ere), ei = t.leaf(eim);
  const int loss = ad_losses::l2_loss_op(t, cr, ci, er, ei, beta);
  t.backward(loss);
  return {t.val(loss)[0], {{"est_re", t.grad(er)}, {"est_im", t.grad(ei)}}};
}

// ---- finite-difference gradient checker --------------------------------------

// Evaluates a loss over a parameter set; when `grads` is non-null, fills one
// gradient tensor per parameter (reverse mode).
using LossEval = std::function<double(const std::vector<Tensor<double>>& params,
                                      std::vector<Tensor<double>>* grads)>;

struct GradCheckReport {
  struct Probe {
    int tensor = 0;
    std::size_t element = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
    bool skipped = false;  // nondifferentiable point detected
  };
  std::vector<Probe> probes;
  double max_rel_err = 0.0;
  int n_skipped = 0;

  std::string to_text() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const Probe& p = probes[i];
      os << "probe " << i << " (t" << p.tensor << "[" << p.element << "]): ";
      if (p.skipped) {
        os << "skipped (nondifferentiable point)\n";
      } else {
        os << "analytic=" << p.analytic << " numeric=" << p.numeric
           << " rel_err=" << p.rel_err << "\n";
      }
    }
    os << "max_rel_err=" << max_rel_err << " skipped=" << n_skipped << "\n";
    return os.str();
  }
};

// Central finite differences (default step 1e-6, double precision) against
// reverse-mode gradients on randomly chosen scalar parameters. One-sided
// differences that disagree flag a kink and the probe is skipped.
inline GradCheckReport grad_check(const LossEval& loss,
                                  std::vector<Tensor<double>> params, int n_probes,
                                  std::uint64_t seed, double step = 1e-6) {
  std::vector<Tensor<double>> grads;
  const double f0 = loss(params, &grads);
  if (!std::isfinite(f0)) throw NumericError("non-finite loss at probe point");

  std::mt19937_64 rng = named_rng(seed, "grad-check");
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  if (total == 0) throw InvalidInputError("grad_check needs parameters");

  GradCheckReport report;
  for (int k = 0; k < n_probes; ++k) {
    std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    int ti = 0;
    while (flat >= params[static_cast<std::size_t>(ti)].size()) {
      flat -= params[static_cast<std::size_t>(ti)].size();
      ++ti;
    }
    GradCheckReport::Probe probe;
    probe.tensor = ti;
    probe.element = flat;
    probe.analytic = grads[static_cast<std::size_t>(ti)][flat];

    const double saved = params[static_cast<std::size_t>(ti)][flat];
    params[static_cast<std::size_t>(ti)][flat] = saved + step;
    const double fp = loss(params, nullptr);
    params[static_cast<std::size_t>(ti)][flat] = saved - step;
    const double fm = loss(params, nullptr);
    params[static_cast<std::size_t>(ti)][flat] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("non-finite loss during finite differencing");

    const double fwd = (fp - f0) / step;
    const double bwd = (f0 - fm) / step;
    probe.numeric = (fp - fm) / (2.0 * step);

    const double side_mag = std::max(std::abs(fwd), std::abs(bwd));
    if (side_mag > 1e-7 && std::abs(fwd - bwd) / side_mag > 0.1) {
      probe.skipped = true;
      ++report.n_skipped;
    } else {
      const double denom = std::max(std::abs(probe.analytic), std::abs(probe.numeric));
      probe.rel_err =
          denom < 1e-8 ? 0.0 : std::abs(probe.analytic - probe.numeric) / denom;
      report.max_rel_err = std::max(report.max_rel_err, probe.rel_err);
    }
    report.probes.push_back(probe);
  }
  return report;
}

}  // namespace melmask2
