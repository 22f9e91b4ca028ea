#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "melmask2/errors.hpp"
#include "melmask2/kernels.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2 {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

enum class LayerKind { kConv, kTConv, kBatchNorm, kGru, kReshape, kConcatSkip, kActivation };
enum class Activation { kRelu, kSigmoid };
enum class ReshapeMode { kFlatten, kUnflatten };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::string name;  // weight-name prefix where the layer has weights
  // conv / tconv
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 3;  // frequency axis; the time axis kernel is always 1
  int stride = 1;
  // gru
  int input_size = 0;
  int units = 0;
  // reshape
  ReshapeMode reshape = ReshapeMode::kFlatten;
  int reshape_ch = 0;
  int reshape_bands = 0;
  // concat-skip
  int skip_source = -1;  // index of the layer whose output is concatenated
  // activation
  Activation act = Activation::kRelu;
};

// Two fixed Unet-GRU topologies plus a widened variant; weights are named
// tensors, streaming state is the per-layer GRU hidden vectors.
template <typename T>
class ModelGraph {
 public:
  std::vector<LayerSpec> layers;
  std::vector<std::string> weight_order;
  std::map<std::string, Tensor<T>> weights;
  std::set<std::string> non_trainable;  // batch-norm running stats

  int stage = 1;
  int in_bands = 0;
  int in_channels = 0;
  int width_mult = 1;

  Tensor<T>& weight(const std::string& name) {
    auto it = weights.find(name);
    if (it == weights.end()) throw InvalidInputError("unknown weight " + name);
    return it->second;
  }
  const Tensor<T>& weight(const std::string& name) const {
    auto it = weights.find(name);
    if (it == weights.end()) throw InvalidInputError("unknown weight " + name);
    return it->second;
  }

  bool trainable(const std::string& name) const {
    return non_trainable.find(name) == non_trainable.end();
  }

  void reset_state() {
    gru_state_.clear();
    for (const LayerSpec& l : layers)
      if (l.kind == LayerKind::kGru) gru_state_[l.name] = Tensor<T>({l.units});
    state_ready_ = true;
  }

  bool state_ready() const { return state_ready_; }

  // Single-frame streaming forward. Advances GRU state by one frame; the
  // convolution stack has no time extent, so causality is structural.
  Tensor<T> forward_frame(const Tensor<T>& frame) {
    if (!state_ready_) throw StateError("forward_frame before reset_state");
    if (frame.rank() != 2 || frame.dim(0) != in_channels || frame.dim(1) != in_bands)
      throw InvalidInputError("frame shape does not match model input");

    Tensor<T> cur = frame.reshaped({1, in_channels, in_bands});
    std::map<int, Tensor<T>> saved;
    const std::set<int> taps = skip_sources();

    for (std::size_t li = 0; li < layers.size(); ++li) {
      const LayerSpec& l = layers[li];
      switch (l.kind) {
        case LayerKind::kConv:
          cur = kernels::conv_freq(cur, weight(l.name + ".w"), weight(l.name + ".b"),
                                   l.stride);
          break;
        case LayerKind::kTConv:
          cur = kernels::tconv_freq(cur, weight(l.name + ".w"), weight(l.name + ".b"),
                                    l.stride);
          break;
        case LayerKind::kBatchNorm:
          cur = kernels::bn_eval(cur, weight(l.name + ".gamma"),
                                 weight(l.name + ".beta"),
                                 weight(l.name + ".running_mean"),
                                 weight(l.name + ".running_var"),
                                 static_cast<T>(kBnEps));
          break;
        case LayerKind::kGru: {
          Tensor<T>& h = gru_state_[l.name];
          h = kernels::gru_cell(cur, h, weight(l.name + ".w_ih"),
                                weight(l.name + ".w_hh"), weight(l.name + ".b_ih"),
                                weight(l.name + ".b_hh"));
          cur = h;
          break;
        }
        case LayerKind::kReshape:
          if (l.reshape == ReshapeMode::kFlatten) {
            cur = cur.reshaped({static_cast<int>(cur.size())});
          } else {
            cur = cur.reshaped({1, l.reshape_ch, l.reshape_bands});
          }
          break;
        case LayerKind::kConcatSkip: {
          auto it = saved.find(l.skip_source);
          if (it == saved.end()) throw StateError("skip source not available");
          const Tensor<T>& skip = it->second;
          const int ca = cur.dim(1), cb = skip.dim(1), fb = cur.dim(2);
          Tensor<T> merged({1, ca + cb, fb});
          for (int c = 0; c < ca; ++c)
            for (int f = 0; f < fb; ++f) merged.at(0, c, f) = cur.at(0, c, f);
          for (int c = 0; c < cb; ++c)
            for (int f = 0; f < fb; ++f) merged.at(0, ca + c, f) = skip.at(0, c, f);
          cur = std::move(merged);
          break;
        }
        case LayerKind::kActivation:
          for (std::size_t i = 0; i < cur.size(); ++i)
            cur[i] = l.act == Activation::kRelu
                         ? (cur[i] > T(0) ? cur[i] : T(0))
                         : T(1) / (T(1) + std::exp(-cur[i]));
          break;
      }
      if (taps.count(static_cast<int>(li))) saved[static_cast<int>(li)] = cur;
    }

    if (stage == 1) return cur;                      // [64] gains
    return cur.reshaped({cur.dim(1), cur.dim(2)});   // [2, 512]
  }

  std::set<int> skip_sources() const {
    std::set<int> taps;
    for (const LayerSpec& l : layers)
      if (l.kind == LayerKind::kConcatSkip) taps.insert(l.skip_source);
    return taps;
  }

  template <typename U>
  ModelGraph<U> cast() const {
    ModelGraph<U> out;
    out.layers = layers;
    out.weight_order = weight_order;
    out.non_trainable = non_trainable;
    out.stage = stage;
    out.in_bands = in_bands;
    out.in_channels = in_channels;
    out.width_mult = width_mult;
    for (const auto& [name, w] : weights) out.weights[name] = w.template cast<U>();
    return out;
  }

 private:
  std::map<std::string, Tensor<T>> gru_state_;
  bool state_ready_ = false;
};

template <typename T>
std::size_t count_params(const ModelGraph<T>& g) {
  std::size_t n = 0;
  for (const auto& name : g.weight_order)
    if (g.trainable(name)) n += g.weight(name).size();
  return n;
}

// ---- builders ---------------------------------------------------------------

namespace nn_detail {

template <typename T>
class GraphBuilder {
 public:
  GraphBuilder(ModelGraph<T>& g, std::mt19937_64& rng) : g_(g), rng_(rng) {}

  int conv(const std::string& name, int in_ch, int out_ch, int kernel, int stride) {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    l.name = name;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    add_tensor(name + ".w", {out_ch, in_ch, kernel}, in_ch * kernel);
    add_tensor(name + ".b", {out_ch}, in_ch * kernel);
    return push(l);
  }

  int tconv(const std::string& name, int in_ch, int out_ch, int kernel, int stride) {
    LayerSpec l;
    l.kind = LayerKind::kTConv;
    l.name = name;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    add_tensor(name + ".w", {out_ch, in_ch, kernel}, in_ch * kernel);
    add_tensor(name + ".b", {out_ch}, in_ch * kernel);
    return push(l);
  }

  int batchnorm(const std::string& name, int ch) {
    LayerSpec l;
    l.kind = LayerKind::kBatchNorm;
    l.name = name;
    l.in_ch = l.out_ch = ch;
    add_const_tensor(name + ".gamma", {ch}, T(1), /*trainable=*/true);
    add_const_tensor(name + ".beta", {ch}, T(0), /*trainable=*/true);
    add_const_tensor(name + ".running_mean", {ch}, T(0), /*trainable=*/false);
    add_const_tensor(name + ".running_var", {ch}, T(1), /*trainable=*/false);
    return push(l);
  }

  int gru(const std::string& name, int input_size, int units) {
    LayerSpec l;
    l.kind = LayerKind::kGru;
    l.name = name;
    l.input_size = input_size;
    l.units = units;
    add_tensor(name + ".w_ih", {input_size, 3 * units}, input_size);
    add_tensor(name + ".w_hh", {units, 3 * units}, units);
    add_const_tensor(name + ".b_ih", {3 * units}, T(0), /*trainable=*/true);
    add_const_tensor(name + ".b_hh", {3 * units}, T(0), /*trainable=*/true);
    return push(l);
  }

  int flatten() {
    LayerSpec l;
    l.kind = LayerKind::kReshape;
    l.reshape = ReshapeMode::kFlatten;
    return push(l);
  }

  int unflatten(int ch, int bands) {
    LayerSpec l;
    l.kind = LayerKind::kReshape;
    l.reshape = ReshapeMode::kUnflatten;
    l.reshape_ch = ch;
    l.reshape_bands = bands;
    return push(l);
  }

  int concat_skip(int source_layer) {
    LayerSpec l;
    l.kind = LayerKind::kConcatSkip;
    l.skip_source = source_layer;
    return push(l);
  }

  int relu() {
    LayerSpec l;
    l.kind = LayerKind::kActivation;
    l.act = Activation::kRelu;
    return push(l);
  }

  int sigmoid() {
    LayerSpec l;
    l.kind = LayerKind::kActivation;
    l.act = Activation::kSigmoid;
    return push(l);
  }

 private:
  int push(LayerSpec l) {
    g_.layers.push_back(std::move(l));
    return static_cast<int>(g_.layers.size()) - 1;
  }

  void add_tensor(const std::string& name, std::vector<int> shape, int fan_in) {
    Tensor<T> w(std::move(shape));
    init_uniform_fanin(w, fan_in, rng_);
    g_.weights[name] = std::move(w);
    g_.weight_order.push_back(name);
  }

  void add_const_tensor(const std::string& name, std::vector<int> shape, T value,
                        bool trainable) {
    Tensor<T> w(std::move(shape));
    w.fill(value);
    g_.weights[name] = std::move(w);
    g_.weight_order.push_back(name);
    if (!trainable) g_.non_trainable.insert(name);
  }

  ModelGraph<T>& g_;
  std::mt19937_64& rng_;
};

}  // namespace nn_detail

// Mel-gain masking net: 5 down / 5 up blocks around a two-layer GRU
// bottleneck, sigmoid head over 64 Mel bands. ~273k trainable parameters.
template <typename T = float>
ModelGraph<T> build_stage1(std::uint64_t seed) {
  ModelGraph<T> g;
  g.stage = 1;
  g.in_bands = 64;
  g.in_channels = 1;
  std::mt19937_64 rng = named_rng(seed, "stage1-init");
  nn_detail::GraphBuilder<T> b(g, rng);

  const int channels[6] = {1, 8, 16, 32, 64, 128};
  int skip_taps[5];
  for (int i = 0; i < 5; ++i) {
    const std::string base = "enc" + std::to_string(i + 1);
    b.conv(base + ".a", channels[i], channels[i + 1], 3, 1);
    b.relu();
    b.conv(base + ".b", channels[i + 1], channels[i + 1], 3, 2);
    b.batchnorm(base + ".bn", channels[i + 1]);
    skip_taps[i] = b.relu();
  }

  // Bottleneck at 128 channels x 2 bands.
  b.flatten();
  b.gru("gru1", 256, 64);
  b.gru("gru2", 64, 64);
  b.unflatten(32, 2);
  b.conv("neck", 32, 128, 1, 1);
  b.relu();

  const int dec_ch[5] = {64, 32, 16, 8, 8};
  int cur_ch = 128;
  for (int i = 0; i < 5; ++i) {
    const std::string base = "dec" + std::to_string(i + 1);
    b.concat_skip(skip_taps[4 - i]);
    const int in_ch = cur_ch + channels[5 - i];
    b.tconv(base + ".a", in_ch, dec_ch[i], 3, 1);
    b.relu();
    b.tconv(base + ".b", dec_ch[i], dec_ch[i], 3, 2);
    b.batchnorm(base + ".bn", dec_ch[i]);
    b.relu();
    cur_ch = dec_ch[i];
  }

  b.conv("head", 8, 1, 3, 1);
  b.sigmoid();
  b.flatten();
  return g;
}

// Complex mapping net: 4-channel 512-band input, 3 down / 3 up blocks,
// (16, 64)-unit GRU bottleneck, linear 2-channel head. ~260k trainable
// parameters at width 1, ~593k at width 2.
template <typename T = float>
ModelGraph<T> build_stage2(std::uint64_t seed, int width_mult = 1) {
  if (width_mult < 1 || width_mult > 4)
    throw InvalidConfigError("width_mult must be in [1,4]");
  ModelGraph<T> g;
  g.stage = 2;
  g.in_bands = 512;
  g.in_channels = 4;
  g.width_mult = width_mult;
  std::mt19937_64 rng = named_rng(seed, "stage2-init");
  nn_detail::GraphBuilder<T> b(g, rng);

  const int m = width_mult;
  const int channels[4] = {4, 16 * m, 32 * m, 64 * m};
  int skip_taps[3];
  for (int i = 0; i < 3; ++i) {
    const std::string base = "enc" + std::to_string(i + 1);
    b.conv(base + ".a", channels[i], channels[i + 1], 3, 1);
    b.relu();
    b.conv(base + ".b", channels[i + 1], channels[i + 1], 3, 2);
    b.batchnorm(base + ".bn", channels[i + 1]);
    skip_taps[i] = b.relu();
  }

  // Bottleneck at 64m channels x 64 bands.
  b.flatten();
  b.gru("gru1", 64 * m * 64, 16);
  b.gru("gru2", 16, 64);
  b.unflatten(1, 64);
  b.conv("neck", 1, 64 * m, 1, 1);
  b.relu();

  const int dec_ch[3] = {32 * m, 16 * m, 16 * m};
  int cur_ch = 64 * m;
  for (int i = 0; i < 3; ++i) {
    const std::string base = "dec" + std::to_string(i + 1);
    b.concat_skip(skip_taps[2 - i]);
    const int in_ch = cur_ch + channels[3 - i];
    b.tconv(base + ".a", in_ch, dec_ch[i], 3, 1);
    b.relu();
    b.tconv(base + ".b", dec_ch[i], dec_ch[i], 3, 2);
    b.batchnorm(base + ".bn", dec_ch[i]);
    b.relu();
    cur_ch = dec_ch[i];
  }

  b.conv("head", 16 * m, 2, 3, 1);  // linear head: (real, imaginary)
  return g;
}

}  // namespace melmask2
