#pragma once

#include <cmath>
#include <vector>

#include "melmask2/autodiff.hpp"
#include "melmask2/kernels.hpp"

namespace melmask2::ad {

template <typename T>
int conv_freq(Tape<T>& t, int x, int w, int b, int stride) {
  Tensor<T> out = kernels::conv_freq(t.val(x), t.val(w), t.val(b), stride);
  const int y = t.make(std::move(out), t.any_rg({x, w, b}));
  t.set_backward(y, [y, x, w, b, stride](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& vx = tp.val(x);
    const Tensor<T>& vw = tp.val(w);
    const int frames = vx.dim(0), cin = vx.dim(1), fin = vx.dim(2);
    const int cout = vw.dim(0), k = vw.dim(2);
    const int pad = (k - 1) / 2;
    const int fout = g.dim(2);
    const bool need_x = tp.requires_grad(x);
    const bool need_w = tp.requires_grad(w);
    const bool need_b = tp.requires_grad(b);
    Tensor<T>* gx = need_x ? &tp.grad(x) : nullptr;
    Tensor<T>* gw = need_w ? &tp.grad(w) : nullptr;
    Tensor<T>* gb = need_b ? &tp.grad(b) : nullptr;
    for (int tt = 0; tt < frames; ++tt)
      for (int co = 0; co < cout; ++co)
        for (int fo = 0; fo < fout; ++fo) {
          const T gv = g.at(tt, co, fo);
          if (gv == T(0)) continue;
          if (need_b) (*gb)[static_cast<std::size_t>(co)] += gv;
          for (int ci = 0; ci < cin; ++ci)
            for (int kk = 0; kk < k; ++kk) {
              const int fi = fo * stride + kk - pad;
              if (fi < 0 || fi >= fin) continue;
              if (need_w) gw->at(co, ci, kk) += gv * vx.at(tt, ci, fi);
              if (need_x) gx->at(tt, ci, fi) += gv * vw.at(co, ci, kk);
            }
        }
  });
  return y;
}

template <typename T>
int tconv_freq(Tape<T>& t, int x, int w, int b, int stride) {
  Tensor<T> out = kernels::tconv_freq(t.val(x), t.val(w), t.val(b), stride);
  const int y = t.make(std::move(out), t.any_rg({x, w, b}));
  t.set_backward(y, [y, x, w, b, stride](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& vx = tp.val(x);
    const Tensor<T>& vw = tp.val(w);
    const int frames = vx.dim(0), cin = vx.dim(1), fin = vx.dim(2);
    const int cout = vw.dim(0), k = vw.dim(2);
    const int pad = (k - 1) / 2;
    const int fout = g.dim(2);
    const bool need_x = tp.requires_grad(x);
    const bool need_w = tp.requires_grad(w);
    const bool need_b = tp.requires_grad(b);
    Tensor<T>* gx = need_x ? &tp.grad(x) : nullptr;
    Tensor<T>* gw = need_w ? &tp.grad(w) : nullptr;
    Tensor<T>* gb = need_b ? &tp.grad(b) : nullptr;
    for (int tt = 0; tt < frames; ++tt)
      for (int co = 0; co < cout; ++co)
        for (int fo = 0; fo < fout; ++fo) {
          const T gv = g.at(tt, co, fo);
          if (gv == T(0)) continue;
          if (need_b) (*gb)[static_cast<std::size_t>(co)] += gv;
          for (int ci = 0; ci < cin; ++ci)
            for (int kk = 0; kk < k; ++kk) {
              const int num = fo + pad - kk;
              if (num % stride != 0) continue;
              const int fi = num / stride;
              if (fi < 0 || fi >= fin) continue;
              if (need_w) gw->at(co, ci, kk) += gv * vx.at(tt, ci, fi);
              if (need_x) gx->at(tt, ci, fi) += gv * vw.at(co, ci, kk);
            }
        }
  });
  return y;
}

// Training batch norm over (frames, bands) per channel. Returns the output
// node plus the batch statistics so the caller can fold them into running
// stats once the step commits (forward itself must stay side-effect free so
// finite-difference probes remain pure).
template <typename T>
struct BnTrainResult {
  int y = -1;
  Tensor<T> batch_mean;
  Tensor<T> batch_var;
};

template <typename T>
BnTrainResult<T> bn_train(Tape<T>& t, int x, int gamma, int beta, T eps) {
  const Tensor<T>& vx = t.val(x);
  const int frames = vx.dim(0), ch = vx.dim(1), bands = vx.dim(2);
  const T n = static_cast<T>(frames) * static_cast<T>(bands);

  Tensor<T> mean({ch}), var({ch});
  for (int c = 0; c < ch; ++c) {
    T acc = T(0);
    for (int tt = 0; tt < frames; ++tt)
      for (int f = 0; f < bands; ++f) acc += vx.at(tt, c, f);
    mean[static_cast<std::size_t>(c)] = acc / n;
  }
  for (int c = 0; c < ch; ++c) {
    T acc = T(0);
    for (int tt = 0; tt < frames; ++tt)
      for (int f = 0; f < bands; ++f) {
        const T d = vx.at(tt, c, f) - mean[static_cast<std::size_t>(c)];
        acc += d * d;
      }
    var[static_cast<std::size_t>(c)] = acc / n;
  }

  Tensor<T> xhat(vx.shape());
  Tensor<T> out(vx.shape());
  const Tensor<T>& vg = t.val(gamma);
  const Tensor<T>& vb = t.val(beta);
  for (int c = 0; c < ch; ++c) {
    const T inv_sd = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
    for (int tt = 0; tt < frames; ++tt)
      for (int f = 0; f < bands; ++f) {
        const T xh = (vx.at(tt, c, f) - mean[static_cast<std::size_t>(c)]) * inv_sd;
        xhat.at(tt, c, f) = xh;
        out.at(tt, c, f) =
            vg[static_cast<std::size_t>(c)] * xh + vb[static_cast<std::size_t>(c)];
      }
  }

  BnTrainResult<T> res;
  res.batch_mean = mean;
  res.batch_var = var;
  res.y = t.make(std::move(out), t.any_rg({x, gamma, beta}));
  t.set_backward(res.y, [y = res.y, x, gamma, beta, xhat, var, eps, frames, ch,
                         bands, n](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(beta)) {
      Tensor<T>& gb = tp.grad(beta);
      for (int c = 0; c < ch; ++c) {
        T acc = T(0);
        for (int tt = 0; tt < frames; ++tt)
          for (int f = 0; f < bands; ++f) acc += g.at(tt, c, f);
        gb[static_cast<std::size_t>(c)] += acc;
      }
    }
    if (tp.requires_grad(gamma)) {
      Tensor<T>& gg = tp.grad(gamma);
      for (int c = 0; c < ch; ++c) {
        T acc = T(0);
        for (int tt = 0; tt < frames; ++tt)
          for (int f = 0; f < bands; ++f) acc += g.at(tt, c, f) * xhat.at(tt, c, f);
        gg[static_cast<std::size_t>(c)] += acc;
      }
    }
    if (tp.requires_grad(x)) {
      Tensor<T>& gx = tp.grad(x);
      const Tensor<T>& vg = tp.val(gamma);
      for (int c = 0; c < ch; ++c) {
        T sum_g = T(0), sum_gx = T(0);
        for (int tt = 0; tt < frames; ++tt)
          for (int f = 0; f < bands; ++f) {
            sum_g += g.at(tt, c, f);
            sum_gx += g.at(tt, c, f) * xhat.at(tt, c, f);
          }
        const T inv_sd = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const T coef = vg[static_cast<std::size_t>(c)] * inv_sd;
        for (int tt = 0; tt < frames; ++tt)
          for (int f = 0; f < bands; ++f)
            gx.at(tt, c, f) += coef * (g.at(tt, c, f) - sum_g / n -
                                       xhat.at(tt, c, f) * sum_gx / n);
      }
    }
  });
  return res;
}

// Inference batch norm on the tape: frozen stats, trainable affine.
template <typename T>
int bn_eval(Tape<T>& t, int x, int gamma, int beta, const Tensor<T>& mean,
            const Tensor<T>& var, T eps) {
  Tensor<T> out =
      kernels::bn_eval(t.val(x), t.val(gamma), t.val(beta), mean, var, eps);
  const int y = t.make(std::move(out), t.any_rg({x, gamma, beta}));
  t.set_backward(y, [y, x, gamma, beta, mean, var, eps](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& vx = tp.val(x);
    const int frames = vx.dim(0), ch = vx.dim(1), bands = vx.dim(2);
    for (int c = 0; c < ch; ++c) {
      const T inv_sd = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
      T sum_g = T(0), sum_gx = T(0);
      for (int tt = 0; tt < frames; ++tt)
        for (int f = 0; f < bands; ++f) {
          const T gv = g.at(tt, c, f);
          sum_g += gv;
          sum_gx += gv * (vx.at(tt, c, f) - mean[static_cast<std::size_t>(c)]) * inv_sd;
        }
      if (tp.requires_grad(beta)) tp.grad(beta)[static_cast<std::size_t>(c)] += sum_g;
      if (tp.requires_grad(gamma))
        tp.grad(gamma)[static_cast<std::size_t>(c)] += sum_gx;
      if (tp.requires_grad(x)) {
        Tensor<T>& gx = tp.grad(x);
        const T coef = tp.val(gamma)[static_cast<std::size_t>(c)] * inv_sd;
        for (int tt = 0; tt < frames; ++tt)
          for (int f = 0; f < bands; ++f) gx.at(tt, c, f) += coef * g.at(tt, c, f);
      }
    }
  });
  return y;
}

// Unidirectional GRU over a [T, in] sequence, composed from primitive ops so
// backward-through-time falls out of the tape. Gate order (r, z, n), weights
// [in, 3h] / [h, 3h]. Returns [T, h].
template <typename T>
int gru_sequence(Tape<T>& t, int x_seq, int w_ih, int w_hh, int b_ih, int b_hh,
                 const Tensor<T>& h0) {
  const int frames = t.val(x_seq).dim(0);
  const int hidden = t.val(w_hh).dim(0);
  int h = t.constant(h0);
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(frames));
  for (int tt = 0; tt < frames; ++tt) {
    const int xt = slice_row(t, x_seq, tt);
    const int gi = add(t, matvec(t, xt, w_ih), b_ih);
    const int gh = add(t, matvec(t, h, w_hh), b_hh);
    const int r = sigmoid(t, add(t, slice_vec(t, gi, 0, hidden),
                                 slice_vec(t, gh, 0, hidden)));
    const int z = sigmoid(t, add(t, slice_vec(t, gi, hidden, 2 * hidden),
                                 slice_vec(t, gh, hidden, 2 * hidden)));
    const int n = tanh_op(
        t, add(t, slice_vec(t, gi, 2 * hidden, 3 * hidden),
               mul(t, r, slice_vec(t, gh, 2 * hidden, 3 * hidden))));
    h = add(t, mul(t, one_minus(t, z), n), mul(t, z, h));
    rows.push_back(h);
  }
  return stack_rows(t, rows);
}

}  // namespace melmask2::ad
