#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "melmask2/errors.hpp"
#include "melmask2/nn.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2 {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

template <typename T>
struct AdamState {
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  std::int64_t step = 0;
};

// Bias-corrected first/second-moment update of a single tensor. The caller
// advances the shared step counter once per optimizer step.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
                 std::int64_t step, T lr) {
  if (!param.same_shape(grad)) throw InvalidInputError("adam shape mismatch");
  const T b1 = static_cast<T>(kAdamBeta1);
  const T b2 = static_cast<T>(kAdamBeta2);
  const T c1 = T(1) - static_cast<T>(std::pow(kAdamBeta1, static_cast<double>(step)));
  const T c2 = T(1) - static_cast<T>(std::pow(kAdamBeta2, static_cast<double>(step)));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
    v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
    const T m_hat = m[i] / c1;
    const T v_hat = v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + static_cast<T>(kAdamEps));
  }
}

// One optimizer step over a model's trainable tensors. Rejected wholesale
// (no mutation) if any gradient is non-finite.
template <typename T>
void adam_step(ModelGraph<T>& g, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, T lr) {
  if (lr <= T(0)) throw InvalidConfigError("learning rate must be > 0");
  for (const auto& [name, grad] : grads)
    if (!grad.all_finite())
      throw NumericError("non-finite gradient for " + name + "; step rejected");

  ++state.step;
  for (const auto& [name, grad] : grads) {
    Tensor<T>& w = g.weight(name);
    auto mi = state.m.find(name);
    if (mi == state.m.end()) {
      state.m.emplace(name, Tensor<T>(w.shape()));
      state.v.emplace(name, Tensor<T>(w.shape()));
      mi = state.m.find(name);
    }
    adam_update(w, grad, mi->second, state.v.at(name), state.step, lr);
  }
}

}  // namespace melmask2
