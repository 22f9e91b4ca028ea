#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "melmask2/autodiff.hpp"
#include "melmask2/fft.hpp"
#include "melmask2/stft.hpp"

namespace melmask2::ad {

namespace dsp_detail {

template <typename T>
std::vector<T> window_as(const StftConfig& cfg) {
  std::vector<double> w = make_hann(cfg.window_len);
  std::vector<T> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<T>(w[i]);
  return out;
}

template <typename T>
std::vector<T> coverage_as(int frames, const StftConfig& cfg) {
  const std::vector<T> w = window_as<T>(cfg);
  std::vector<T> cov(
      static_cast<std::size_t>(frames - 1) * cfg.hop + cfg.window_len, T(0));
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n) cov[start + n] += w[static_cast<std::size_t>(n)] * w[static_cast<std::size_t>(n)];
  }
  return cov;
}

}  // namespace dsp_detail

// Differentiable analysis transform. Input [N] -> [T, 2, bins] with channel 0
// the real part and channel 1 the imaginary part of the one-sided spectrum.
template <typename T>
int stft_op(Tape<T>& t, int x, const StftConfig& cfg) {
  cfg.validate();
  const Tensor<T>& vx = t.val(x);
  if (vx.rank() != 1) throw InvalidInputError("stft_op expects a 1-D signal");
  const int frames = stft_frame_count(vx.size(), cfg);
  if (frames <= 0) throw InvalidInputError("stft_op input shorter than a window");
  const int bins = cfg.n_bins_total();
  const std::vector<T> window = dsp_detail::window_as<T>(cfg);

  Tensor<T> out({frames, 2, bins});
  std::vector<std::complex<T>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (int tt = 0; tt < frames; ++tt) {
    const std::size_t start = static_cast<std::size_t>(tt) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      buf[static_cast<std::size_t>(n)] = {vx[start + n] * window[static_cast<std::size_t>(n)], T(0)};
    for (int n = cfg.window_len; n < cfg.fft_size; ++n)
      buf[static_cast<std::size_t>(n)] = {T(0), T(0)};
    fft_inplace(buf, false);
    for (int f = 0; f < bins; ++f) {
      out.at(tt, 0, f) = buf[static_cast<std::size_t>(f)].real();
      out.at(tt, 1, f) = buf[static_cast<std::size_t>(f)].imag();
    }
  }

  const int y = t.make(std::move(out), t.requires_grad(x));
  t.set_backward(y, [y, x, cfg, frames, bins, window](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& gx = tp.grad(x);
    std::vector<std::complex<T>> buf(static_cast<std::size_t>(cfg.fft_size));
    for (int tt = 0; tt < frames; ++tt) {
      for (int f = 0; f < bins; ++f)
        buf[static_cast<std::size_t>(f)] = {g.at(tt, 0, f), g.at(tt, 1, f)};
      for (int f = bins; f < cfg.fft_size; ++f) buf[static_cast<std::size_t>(f)] = {T(0), T(0)};
      fft_inplace(buf, true);  // unnormalized inverse: sum over kept bins only
      const std::size_t start = static_cast<std::size_t>(tt) * cfg.hop;
      for (int n = 0; n < cfg.window_len; ++n)
        gx[start + n] += window[static_cast<std::size_t>(n)] * buf[static_cast<std::size_t>(n)].real();
    }
  });
  return y;
}

// Differentiable weighted overlap-add synthesis. Input [T, 2, bins] -> [N].
// Mirrors the plain istft: Hermitian extension, inverse transform, synthesis
// window, division by accumulated squared-window coverage.
template <typename T>
int istft_op(Tape<T>& t, int spec, const StftConfig& cfg) {
  cfg.validate();
  const Tensor<T>& vs = t.val(spec);
  if (vs.rank() != 3 || vs.dim(1) != 2 || vs.dim(2) != cfg.n_bins_total())
    throw InvalidInputError("istft_op expects [T, 2, bins]");
  const int frames = vs.dim(0);
  const int nyq = cfg.fft_size / 2;
  const std::vector<T> window = dsp_detail::window_as<T>(cfg);
  const std::vector<T> cov = dsp_detail::coverage_as<T>(frames, cfg);

  Tensor<T> out({static_cast<int>(cov.size())});
  std::vector<std::complex<T>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (int tt = 0; tt < frames; ++tt) {
    for (int f = 0; f <= nyq; ++f)
      buf[static_cast<std::size_t>(f)] = {vs.at(tt, 0, f), vs.at(tt, 1, f)};
    for (int f = nyq + 1; f < cfg.fft_size; ++f)
      buf[static_cast<std::size_t>(f)] =
          std::conj(buf[static_cast<std::size_t>(cfg.fft_size - f)]);
    fft_inplace(buf, true);
    const std::size_t start = static_cast<std::size_t>(tt) * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      out[start + n] += buf[static_cast<std::size_t>(n)].real() /
                        static_cast<T>(cfg.fft_size) * window[static_cast<std::size_t>(n)];
  }
  for (std::size_t i = 0; i < cov.size(); ++i)
    out[i] = cov[i] > T(1e-12) ? out[i] / cov[i] : T(0);

  const int y = t.make(std::move(out), t.requires_grad(spec));
  t.set_backward(y, [y, spec, cfg, frames, nyq, window, cov](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& gs = tp.grad(spec);
    std::vector<std::complex<T>> buf(static_cast<std::size_t>(cfg.fft_size));
    for (int tt = 0; tt < frames; ++tt) {
      const std::size_t start = static_cast<std::size_t>(tt) * cfg.hop;
      for (int n = 0; n < cfg.fft_size; ++n) buf[static_cast<std::size_t>(n)] = {T(0), T(0)};
      for (int n = 0; n < cfg.window_len; ++n) {
        const std::size_t idx = start + n;
        const T c = cov[idx];
        const T gv = c > T(1e-12) ? g[idx] / c : T(0);
        buf[static_cast<std::size_t>(n)] = {
            gv * window[static_cast<std::size_t>(n)] / static_cast<T>(cfg.fft_size), T(0)};
      }
      fft_inplace(buf, false);
      for (int f = 0; f <= nyq; ++f) {
        const T mult = (f == 0 || f == nyq) ? T(1) : T(2);
        gs.at(tt, 0, f) += mult * buf[static_cast<std::size_t>(f)].real();
        if (f != 0 && f != nyq)
          gs.at(tt, 1, f) += mult * buf[static_cast<std::size_t>(f)].imag();
      }
    }
  });
  return y;
}

// Compressed complex spectrum |v|^beta * e^{i arg v}, fused so the value is
// exact at zero magnitude; the derivative is guarded there.
template <typename T>
struct CompressedComplex {
  int re = -1;
  int im = -1;
};

template <typename T>
CompressedComplex<T> compress_complex(Tape<T>& t, int re, int im, T beta) {
  if (!t.val(re).same_shape(t.val(im)))
    throw InvalidInputError("compress_complex shape mismatch");
  const Tensor<T>& vre = t.val(re);
  const Tensor<T>& vim = t.val(im);
  Tensor<T> out_re(vre.shape()), out_im(vre.shape());
  for (std::size_t i = 0; i < vre.size(); ++i) {
    const T m = std::hypot(vre[i], vim[i]);
    const T factor = m > T(0) ? std::pow(m, beta) / m : T(0);
    out_re[i] = factor * vre[i];
    out_im[i] = factor * vim[i];
  }

  const bool rg = t.any_rg({re, im});
  CompressedComplex<T> cc;
  cc.re = t.make(std::move(out_re), rg);
  cc.im = t.make(std::move(out_im), rg);

  auto backward = [re, im, beta](Tape<T>& tp, int node, bool is_re) {
    const Tensor<T>& g = tp.grad(node);
    const Tensor<T>& vr = tp.val(re);
    const Tensor<T>& vi = tp.val(im);
    Tensor<T>* gr = tp.requires_grad(re) ? &tp.grad(re) : nullptr;
    Tensor<T>* gi = tp.requires_grad(im) ? &tp.grad(im) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == T(0)) continue;
      const T m = std::max(std::hypot(vr[i], vi[i]), static_cast<T>(kPowGuard));
      const T m_b1 = std::pow(m, beta - T(1));
      const T m_b3 = (beta - T(1)) * std::pow(m, beta - T(3));
      const T a = is_re ? vr[i] : vi[i];  // numerator component of this output
      if (gr) (*gr)[i] += g[i] * (m_b3 * a * vr[i] + (is_re ? m_b1 : T(0)));
      if (gi) (*gi)[i] += g[i] * (m_b3 * a * vi[i] + (is_re ? T(0) : m_b1));
    }
  };
  t.set_backward(cc.re, [cc, backward](Tape<T>& tp) { backward(tp, cc.re, true); });
  t.set_backward(cc.im, [cc, backward](Tape<T>& tp) { backward(tp, cc.im, false); });
  return cc;
}

// Differentiable g * sin((pi/2) g) gain post-filter.
template <typename T>
int sin_postfilter_op(Tape<T>& t, int g) {
  const T half_pi = static_cast<T>(std::numbers::pi / 2.0);
  Tensor<T> out(t.val(g).shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = t.val(g)[i] * std::sin(half_pi * t.val(g)[i]);
  const int y = t.make(std::move(out), t.requires_grad(g));
  t.set_backward(y, [y, g, half_pi](Tape<T>& tp) {
    const Tensor<T>& gy = tp.grad(y);
    const Tensor<T>& vg = tp.val(g);
    Tensor<T>& gg = tp.grad(g);
    for (std::size_t i = 0; i < gy.size(); ++i)
      gg[i] += gy[i] * (std::sin(half_pi * vg[i]) +
                        vg[i] * half_pi * std::cos(half_pi * vg[i]));
  });
  return y;
}

}  // namespace melmask2::ad
