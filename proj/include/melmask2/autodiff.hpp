#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "melmask2/errors.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2::ad {

inline constexpr double kPowGuard = 1e-12;  // derivative guard for x^e near 0

// Define-by-run reverse-mode tape. Creation order is a valid topological
// order, so backward is a single reverse sweep. Nodes hold coarse tensor ops
// (whole layers, whole transforms), not scalars.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::function<void(Tape&)> backward;  // null for leaves and constants
  };

  int leaf(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v), {}, true, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int constant(Tensor<T> v) {
    nodes_.push_back(Node{std::move(v), {}, false, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int make(Tensor<T> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), {}, requires_grad, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backward(int i, std::function<void(Tape&)> fn) {
    if (nodes_[static_cast<std::size_t>(i)].requires_grad)
      nodes_[static_cast<std::size_t>(i)].backward = std::move(fn);
  }

  const Tensor<T>& val(int i) const {
    return nodes_[static_cast<std::size_t>(i)].value;
  }
  bool requires_grad(int i) const {
    return nodes_[static_cast<std::size_t>(i)].requires_grad;
  }
  bool has_grad(int i) const {
    return !nodes_[static_cast<std::size_t>(i)].grad.empty();
  }

  // Gradient tensor, allocated as zeros on first use.
  Tensor<T>& grad(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  void backward(int root) {
    if (val(root).size() != 1)
      throw InvalidInputError("backward root must be a scalar");
    grad(root)[0] = T(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && !n.grad.empty()) n.backward(*this);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

  bool any_rg(std::initializer_list<int> xs) const {
    for (int x : xs)
      if (requires_grad(x)) return true;
    return false;
  }

 private:
  std::vector<Node> nodes_;
};

// ---- elementwise -----------------------------------------------------------

template <typename T>
int add(Tape<T>& t, int a, int b) {
  if (!t.val(a).same_shape(t.val(b))) throw InvalidInputError("add shape mismatch");
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(a)[i] + t.val(b)[i];
  const int y = t.make(std::move(out), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return y;
}

template <typename T>
int sub(Tape<T>& t, int a, int b) {
  if (!t.val(a).same_shape(t.val(b))) throw InvalidInputError("sub shape mismatch");
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(a)[i] - t.val(b)[i];
  const int y = t.make(std::move(out), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return y;
}

template <typename T>
int mul(Tape<T>& t, int a, int b) {
  if (!t.val(a).same_shape(t.val(b))) throw InvalidInputError("mul shape mismatch");
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(a)[i] * t.val(b)[i];
  const int y = t.make(std::move(out), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      const Tensor<T>& vb = tp.val(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      const Tensor<T>& va = tp.val(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
  return y;
}

template <typename T>
int scale(Tape<T>& t, int a, T c) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(a)[i] * c;
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a, c](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
  return y;
}

template <typename T>
int add_scalar(Tape<T>& t, int a, T c) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(a)[i] + c;
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return y;
}

template <typename T>
int one_minus(Tape<T>& t, int a) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) - t.val(a)[i];
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
  return y;
}

template <typename T>
int relu(Tape<T>& t, int a) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = t.val(a)[i] > T(0) ? t.val(a)[i] : T(0);
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& va = tp.val(a);
    Tensor<T>& ga = tp.grad(a);
    // Subgradient at the kink is 0.
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += va[i] > T(0) ? g[i] : T(0);
  });
  return y;
}

template <typename T>
int sigmoid(Tape<T>& t, int a) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-t.val(a)[i]));
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& vy = tp.val(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * vy[i] * (T(1) - vy[i]);
  });
  return y;
}

template <typename T>
int tanh_op(Tape<T>& t, int a) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(t.val(a)[i]);
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& vy = tp.val(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - vy[i] * vy[i]);
  });
  return y;
}

template <typename T>
int clamp01(Tape<T>& t, int a) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(t.val(a)[i], T(0), T(1));
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& va = tp.val(a);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += (va[i] > T(0) && va[i] < T(1)) ? g[i] : T(0);
  });
  return y;
}

// x^e for x >= 0; the derivative guard keeps e < 1 finite at x = 0.
template <typename T>
int pow_guarded(Tape<T>& t, int a, T e) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(t.val(a)[i], e);
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a, e](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& va = tp.val(a);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = std::max(va[i], static_cast<T>(kPowGuard));
      ga[i] += g[i] * e * std::pow(x, e - T(1));
    }
  });
  return y;
}

template <typename T>
int square(Tape<T>& t, int a) {
  Tensor<T> out(t.val(a).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(a)[i] * t.val(a)[i];
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& va = tp.val(a);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += T(2) * g[i] * va[i];
  });
  return y;
}

// Elementwise hypot(re, im); gradient guard avoids the singularity at 0.
template <typename T>
int magnitude(Tape<T>& t, int re, int im) {
  if (!t.val(re).same_shape(t.val(im)))
    throw InvalidInputError("magnitude shape mismatch");
  Tensor<T> out(t.val(re).shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::hypot(t.val(re)[i], t.val(im)[i]);
  const int y = t.make(std::move(out), t.any_rg({re, im}));
  t.set_backward(y, [y, re, im](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const Tensor<T>& vy = tp.val(y);
    const Tensor<T>& vre = tp.val(re);
    const Tensor<T>& vim = tp.val(im);
    if (tp.requires_grad(re)) {
      Tensor<T>& gr = tp.grad(re);
      for (std::size_t i = 0; i < g.size(); ++i)
        gr[i] += g[i] * vre[i] / std::max(vy[i], static_cast<T>(kPowGuard));
    }
    if (tp.requires_grad(im)) {
      Tensor<T>& gi = tp.grad(im);
      for (std::size_t i = 0; i < g.size(); ++i)
        gi[i] += g[i] * vim[i] / std::max(vy[i], static_cast<T>(kPowGuard));
    }
  });
  return y;
}

// ---- reductions and scalars -------------------------------------------------

template <typename T>
int sum_all(Tape<T>& t, int a) {
  T acc = T(0);
  for (std::size_t i = 0; i < t.val(a).size(); ++i) acc += t.val(a)[i];
  const int y = t.make(Tensor<T>({1}, {acc}), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const T g = tp.grad(y)[0];
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
  return y;
}

template <typename T>
int mean_all(Tape<T>& t, int a) {
  const T inv = T(1) / static_cast<T>(t.val(a).size());
  return scale(t, sum_all(t, a), inv);
}

template <typename T>
int dot(Tape<T>& t, int a, int b) {
  if (!t.val(a).same_shape(t.val(b))) throw InvalidInputError("dot shape mismatch");
  T acc = T(0);
  for (std::size_t i = 0; i < t.val(a).size(); ++i) acc += t.val(a)[i] * t.val(b)[i];
  const int y = t.make(Tensor<T>({1}, {acc}), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b](Tape<T>& tp) {
    const T g = tp.grad(y)[0];
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      const Tensor<T>& vb = tp.val(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * vb[i];
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      const Tensor<T>& va = tp.val(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * va[i];
    }
  });
  return y;
}

template <typename T>
int sumsq(Tape<T>& t, int a) {
  T acc = T(0);
  for (std::size_t i = 0; i < t.val(a).size(); ++i) acc += t.val(a)[i] * t.val(a)[i];
  const int y = t.make(Tensor<T>({1}, {acc}), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const T g = tp.grad(y)[0];
    const Tensor<T>& va = tp.val(a);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += T(2) * g * va[i];
  });
  return y;
}

template <typename T>
int s_div(Tape<T>& t, int a, int b) {
  const T vb = t.val(b)[0];
  const int y = t.make(Tensor<T>({1}, {t.val(a)[0] / vb}), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b](Tape<T>& tp) {
    const T g = tp.grad(y)[0];
    const T va = tp.val(a)[0];
    const T vb2 = tp.val(b)[0];
    if (tp.requires_grad(a)) tp.grad(a)[0] += g / vb2;
    if (tp.requires_grad(b)) tp.grad(b)[0] -= g * va / (vb2 * vb2);
  });
  return y;
}

template <typename T>
int s_ln(Tape<T>& t, int a) {
  const int y = t.make(Tensor<T>({1}, {std::log(t.val(a)[0])}), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    tp.grad(a)[0] += tp.grad(y)[0] / tp.val(a)[0];
  });
  return y;
}

template <typename T>
int s_clamp(Tape<T>& t, int a, T lo, T hi) {
  const T v = std::clamp(t.val(a)[0], lo, hi);
  const int y = t.make(Tensor<T>({1}, {v}), t.requires_grad(a));
  t.set_backward(y, [y, a, lo, hi](Tape<T>& tp) {
    const T va = tp.val(a)[0];
    if (va > lo && va < hi) tp.grad(a)[0] += tp.grad(y)[0];
  });
  return y;
}

// v * s for a scalar node s and vector node v.
template <typename T>
int scale_by_scalar(Tape<T>& t, int v, int s) {
  const T sv = t.val(s)[0];
  Tensor<T> out(t.val(v).shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.val(v)[i] * sv;
  const int y = t.make(std::move(out), t.any_rg({v, s}));
  t.set_backward(y, [y, v, s](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    const T sv2 = tp.val(s)[0];
    if (tp.requires_grad(v)) {
      Tensor<T>& gv = tp.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] * sv2;
    }
    if (tp.requires_grad(s)) {
      const Tensor<T>& vv = tp.val(v);
      T acc = T(0);
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * vv[i];
      tp.grad(s)[0] += acc;
    }
  });
  return y;
}

// ---- shape ops --------------------------------------------------------------

template <typename T>
int reshape(Tape<T>& t, int a, std::vector<int> shape) {
  Tensor<T> out = t.val(a).reshaped(std::move(shape));
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return y;
}

template <typename T>
int slice_vec(Tape<T>& t, int a, int lo, int hi) {
  const Tensor<T>& va = t.val(a);
  if (va.rank() != 1 || lo < 0 || hi > va.dim(0) || lo >= hi)
    throw InvalidInputError("slice_vec bounds");
  Tensor<T> out({hi - lo});
  for (int i = lo; i < hi; ++i) out[static_cast<std::size_t>(i - lo)] = va[static_cast<std::size_t>(i)];
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a, lo](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[static_cast<std::size_t>(lo) + i] += g[i];
  });
  return y;
}

template <typename T>
int slice_row(Tape<T>& t, int a, int r) {
  const Tensor<T>& va = t.val(a);
  if (va.rank() != 2 || r < 0 || r >= va.dim(0))
    throw InvalidInputError("slice_row bounds");
  const int n = va.dim(1);
  Tensor<T> out({n});
  for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = va.at(r, j);
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a, r, n](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (int j = 0; j < n; ++j) ga.at(r, j) += g[static_cast<std::size_t>(j)];
  });
  return y;
}

template <typename T>
int stack_rows(Tape<T>& t, const std::vector<int>& rows) {
  if (rows.empty()) throw InvalidInputError("stack_rows needs rows");
  const int n = t.val(rows[0]).dim(0);
  Tensor<T> out({static_cast<int>(rows.size()), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor<T>& v = t.val(rows[r]);
    if (v.rank() != 1 || v.dim(0) != n) throw InvalidInputError("stack_rows shape");
    for (int j = 0; j < n; ++j) out.at(static_cast<int>(r), j) = v[static_cast<std::size_t>(j)];
  }
  bool rg = false;
  for (int r : rows) rg = rg || t.requires_grad(r);
  const int y = t.make(std::move(out), rg);
  t.set_backward(y, [y, rows, n](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!tp.requires_grad(rows[r])) continue;
      Tensor<T>& gr = tp.grad(rows[r]);
      for (int j = 0; j < n; ++j) gr[static_cast<std::size_t>(j)] += g.at(static_cast<int>(r), j);
    }
  });
  return y;
}

template <typename T>
int concat_cols(Tape<T>& t, int a, int b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(0) != vb.dim(0))
    throw InvalidInputError("concat_cols shape mismatch");
  const int rows = va.dim(0), ca = va.dim(1), cb = vb.dim(1);
  Tensor<T> out({rows, ca + cb});
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < ca; ++j) out.at(r, j) = va.at(r, j);
    for (int j = 0; j < cb; ++j) out.at(r, ca + j) = vb.at(r, j);
  }
  const int y = t.make(std::move(out), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b, rows, ca, cb](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < ca; ++j) ga.at(r, j) += g.at(r, j);
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cb; ++j) gb.at(r, j) += g.at(r, ca + j);
    }
  });
  return y;
}

template <typename T>
int slice_cols(Tape<T>& t, int a, int lo, int hi) {
  const Tensor<T>& va = t.val(a);
  if (va.rank() != 2 || lo < 0 || hi > va.dim(1) || lo >= hi)
    throw InvalidInputError("slice_cols bounds");
  const int rows = va.dim(0), n = hi - lo;
  Tensor<T> out({rows, n});
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) out.at(r, j) = va.at(r, lo + j);
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a, lo, rows, n](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < n; ++j) ga.at(r, lo + j) += g.at(r, j);
  });
  return y;
}

// Stack [T,F] planes into [T,C,F] channels.
template <typename T>
int stack_channels(Tape<T>& t, const std::vector<int>& planes) {
  if (planes.empty()) throw InvalidInputError("stack_channels needs inputs");
  const int frames = t.val(planes[0]).dim(0);
  const int bands = t.val(planes[0]).dim(1);
  const int ch = static_cast<int>(planes.size());
  Tensor<T> out({frames, ch, bands});
  bool rg = false;
  for (int c = 0; c < ch; ++c) {
    const Tensor<T>& v = t.val(planes[static_cast<std::size_t>(c)]);
    if (v.rank() != 2 || v.dim(0) != frames || v.dim(1) != bands)
      throw InvalidInputError("stack_channels shape mismatch");
    rg = rg || t.requires_grad(planes[static_cast<std::size_t>(c)]);
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < bands; ++j) out.at(f, c, j) = v.at(f, j);
  }
  const int y = t.make(std::move(out), rg);
  t.set_backward(y, [y, planes, frames, bands](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    for (int c = 0; c < static_cast<int>(planes.size()); ++c) {
      const int p = planes[static_cast<std::size_t>(c)];
      if (!tp.requires_grad(p)) continue;
      Tensor<T>& gp = tp.grad(p);
      for (int f = 0; f < frames; ++f)
        for (int j = 0; j < bands; ++j) gp.at(f, j) += g.at(f, c, j);
    }
  });
  return y;
}

template <typename T>
int slice_channel(Tape<T>& t, int a, int c) {
  const Tensor<T>& va = t.val(a);
  if (va.rank() != 3 || c < 0 || c >= va.dim(1))
    throw InvalidInputError("slice_channel bounds");
  const int frames = va.dim(0), bands = va.dim(2);
  Tensor<T> out({frames, bands});
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < bands; ++j) out.at(f, j) = va.at(f, c, j);
  const int y = t.make(std::move(out), t.requires_grad(a));
  t.set_backward(y, [y, a, c, frames, bands](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    Tensor<T>& ga = tp.grad(a);
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < bands; ++j) ga.at(f, c, j) += g.at(f, j);
  });
  return y;
}

// Concat along the channel axis of [T,C,F] tensors.
template <typename T>
int concat_channels(Tape<T>& t, int a, int b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  if (va.rank() != 3 || vb.rank() != 3 || va.dim(0) != vb.dim(0) ||
      va.dim(2) != vb.dim(2))
    throw InvalidInputError("concat_channels shape mismatch");
  const int frames = va.dim(0), ca = va.dim(1), cb = vb.dim(1), bands = va.dim(2);
  Tensor<T> out({frames, ca + cb, bands});
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < ca; ++c)
      for (int j = 0; j < bands; ++j) out.at(f, c, j) = va.at(f, c, j);
    for (int c = 0; c < cb; ++c)
      for (int j = 0; j < bands; ++j) out.at(f, ca + c, j) = vb.at(f, c, j);
  }
  const int y = t.make(std::move(out), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b, frames, ca, cb, bands](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      for (int f = 0; f < frames; ++f)
        for (int c = 0; c < ca; ++c)
          for (int j = 0; j < bands; ++j) ga.at(f, c, j) += g.at(f, c, j);
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      for (int f = 0; f < frames; ++f)
        for (int c = 0; c < cb; ++c)
          for (int j = 0; j < bands; ++j) gb.at(f, c, j) += g.at(f, ca + c, j);
    }
  });
  return y;
}

// ---- linear algebra ---------------------------------------------------------

template <typename T>
int matmul(Tape<T>& t, int a, int b) {
  const Tensor<T>& va = t.val(a);
  const Tensor<T>& vb = t.val(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
    throw InvalidInputError("matmul shape mismatch");
  const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const T aik = va.at(i, kk);
      if (aik == T(0)) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += aik * vb.at(kk, j);
    }
  const int y = t.make(std::move(out), t.any_rg({a, b}));
  t.set_backward(y, [y, a, b, m, k, n](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      const Tensor<T>& vb2 = tp.val(b);
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          T acc = T(0);
          for (int j = 0; j < n; ++j) acc += g.at(i, j) * vb2.at(kk, j);
          ga.at(i, kk) += acc;
        }
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      const Tensor<T>& va2 = tp.val(a);
      for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < n; ++j) {
          T acc = T(0);
          for (int i = 0; i < m; ++i) acc += va2.at(i, kk) * g.at(i, j);
          gb.at(kk, j) += acc;
        }
    }
  });
  return y;
}

// x [K] times w [K,N] -> [N]. Accumulation over k ascending, matching the
// streaming inference loops bit-for-bit in double precision.
template <typename T>
int matvec(Tape<T>& t, int x, int w) {
  const Tensor<T>& vx = t.val(x);
  const Tensor<T>& vw = t.val(w);
  if (vx.rank() != 1 || vw.rank() != 2 || vx.dim(0) != vw.dim(0))
    throw InvalidInputError("matvec shape mismatch");
  const int k = vw.dim(0), n = vw.dim(1);
  Tensor<T> out({n});
  for (int j = 0; j < n; ++j) {
    T acc = T(0);
    for (int kk = 0; kk < k; ++kk) acc += vx[static_cast<std::size_t>(kk)] * vw.at(kk, j);
    out[static_cast<std::size_t>(j)] = acc;
  }
  const int y = t.make(std::move(out), t.any_rg({x, w}));
  t.set_backward(y, [y, x, w, k, n](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(y);
    if (tp.requires_grad(x)) {
      Tensor<T>& gx = tp.grad(x);
      const Tensor<T>& vw2 = tp.val(w);
      for (int kk = 0; kk < k; ++kk) {
        T acc = T(0);
        for (int j = 0; j < n; ++j) acc += vw2.at(kk, j) * g[static_cast<std::size_t>(j)];
        gx[static_cast<std::size_t>(kk)] += acc;
      }
    }
    if (tp.requires_grad(w)) {
      Tensor<T>& gw = tp.grad(w);
      const Tensor<T>& vx2 = tp.val(x);
      for (int kk = 0; kk < k; ++kk) {
        const T xv = vx2[static_cast<std::size_t>(kk)];
        if (xv == T(0)) continue;
        for (int j = 0; j < n; ++j) gw.at(kk, j) += xv * g[static_cast<std::size_t>(j)];
      }
    }
  });
  return y;
}

}  // namespace melmask2::ad
