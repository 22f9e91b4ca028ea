#pragma once

#include <cmath>

#include "melmask2/errors.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2::kernels {

// Frequency-axis convolution, kernel (1,3), symmetric zero padding 1.
// x: [T, Cin, Fin], w: [Cout, Cin, K], b: [Cout] -> [T, Cout, Fout].
// The time axis is untouched (kernel 1), which is what makes every model in
// this project causal and streamable frame by frame.
template <typename T>
Tensor<T> conv_freq(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    int stride) {
  const int frames = x.dim(0), cin = x.dim(1), fin = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) throw InvalidInputError("conv channel mismatch");
  const int pad = (k - 1) / 2;
  const int fout = (fin + 2 * pad - k) / stride + 1;

  // Accumulates per output element in (ci, kk) ascending order; the loop
  // nest keeps the inner trip contiguous over the frequency axis.
  Tensor<T> y({frames, cout, fout});
  for (int t = 0; t < frames; ++t)
    for (int co = 0; co < cout; ++co) {
      T* row = &y.at(t, co, 0);
      const T bias = b[static_cast<std::size_t>(co)];
      for (int fo = 0; fo < fout; ++fo) row[fo] = bias;
      for (int ci = 0; ci < cin; ++ci) {
        const T* xin = &x.at(t, ci, 0);
        for (int kk = 0; kk < k; ++kk) {
          const T wv = w.at(co, ci, kk);
          const int off = kk - pad;
          const int fo_lo = std::max(0, (-off + stride - 1) / stride);
          const int fo_hi =
              std::min(fout, off >= fin ? 0 : (fin - off + stride - 1) / stride);
          for (int fo = fo_lo; fo < fo_hi; ++fo)
            row[fo] += wv * xin[fo * stride + off];
        }
      }
    }
  return y;
}

// Transposed frequency convolution, kernel (1,3), padding 1, output padding
// stride-1: stride 1 preserves width, stride 2 doubles it.
template <typename T>
Tensor<T> tconv_freq(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     int stride) {
  const int frames = x.dim(0), cin = x.dim(1), fin = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) throw InvalidInputError("tconv channel mismatch");
  const int pad = (k - 1) / 2;
  const int fout = stride == 1 ? fin : fin * stride;

  // Scatter formulation; per output element the (ci, kk) contribution order
  // matches the gather formulation.
  Tensor<T> y({frames, cout, fout});
  for (int t = 0; t < frames; ++t)
    for (int co = 0; co < cout; ++co) {
      T* row = &y.at(t, co, 0);
      const T bias = b[static_cast<std::size_t>(co)];
      for (int fo = 0; fo < fout; ++fo) row[fo] = bias;
      for (int ci = 0; ci < cin; ++ci) {
        const T* xin = &x.at(t, ci, 0);
        for (int kk = 0; kk < k; ++kk) {
          const T wv = w.at(co, ci, kk);
          const int off = kk - pad;
          for (int fi = 0; fi < fin; ++fi) {
            const int fo = fi * stride + off;
            if (fo >= 0 && fo < fout) row[fo] += wv * xin[fi];
          }
        }
      }
    }
  return y;
}

// Inference batch norm: per-channel affine with frozen statistics.
template <typename T>
Tensor<T> bn_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                  const Tensor<T>& mean, const Tensor<T>& var, T eps) {
  const int frames = x.dim(0), ch = x.dim(1), bands = x.dim(2);
  Tensor<T> y(x.shape());
  for (int c = 0; c < ch; ++c) {
    const T inv_sd = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
    for (int t = 0; t < frames; ++t)
      for (int f = 0; f < bands; ++f)
        y.at(t, c, f) = gamma[static_cast<std::size_t>(c)] *
                            (x.at(t, c, f) - mean[static_cast<std::size_t>(c)]) *
                            inv_sd +
                        beta[static_cast<std::size_t>(c)];
  }
  return y;
}

// One GRU step. Weights are [in, 3h] / [h, 3h] with gate order (r, z, n);
// biases are [3h] each. Returns the new hidden state.
template <typename T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& w_ih,
                   const Tensor<T>& w_hh, const Tensor<T>& b_ih,
                   const Tensor<T>& b_hh) {
  const int in = w_ih.dim(0);
  const int hidden = w_hh.dim(0);
  Tensor<T> gi({3 * hidden});
  Tensor<T> gh({3 * hidden});
  for (int j = 0; j < 3 * hidden; ++j) {
    T acc = T(0);
    for (int k = 0; k < in; ++k) acc += x[static_cast<std::size_t>(k)] * w_ih.at(k, j);
    gi[static_cast<std::size_t>(j)] = acc + b_ih[static_cast<std::size_t>(j)];
    acc = T(0);
    for (int k = 0; k < hidden; ++k) acc += h[static_cast<std::size_t>(k)] * w_hh.at(k, j);
    gh[static_cast<std::size_t>(j)] = acc + b_hh[static_cast<std::size_t>(j)];
  }
  Tensor<T> out({hidden});
  for (int j = 0; j < hidden; ++j) {
    const T r = T(1) / (T(1) + std::exp(-(gi[static_cast<std::size_t>(j)] +
                                          gh[static_cast<std::size_t>(j)])));
    const T z = T(1) / (T(1) + std::exp(-(gi[static_cast<std::size_t>(j) + hidden] +
                                          gh[static_cast<std::size_t>(j) + hidden])));
    const T n = std::tanh(gi[static_cast<std::size_t>(j) + 2 * hidden] +
                          r * gh[static_cast<std::size_t>(j) + 2 * hidden]);
    out[static_cast<std::size_t>(j)] =
        (T(1) - z) * n + z * h[static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace melmask2::kernels
