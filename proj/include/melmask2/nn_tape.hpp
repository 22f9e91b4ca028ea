#pragma once

#include <map>
#include <string>
#include <vector>

#include "melmask2/autodiff.hpp"
#include "melmask2/autodiff_nn.hpp"
#include "melmask2/nn.hpp"

namespace melmask2 {

// A ModelGraph instantiated on a tape: weight nodes by name, the batched
// output node, and any batch-norm statistics captured in train mode (the
// caller folds them into running stats when a step commits).
template <typename T>
struct GraphOnTape {
  std::map<std::string, int> weight_nodes;
  int output = -1;
  struct BnCapture {
    std::string layer;
    Tensor<T> mean;
    Tensor<T> var;
  };
  std::vector<BnCapture> bn_stats;
};

// Batched forward over [T, C, F] features. With train_mode off and weights
// non-trainable this is the reference batch inference path; per-frame math
// matches the streaming kernels loop for loop.
template <typename T>
GraphOnTape<T> forward_on_tape(ad::Tape<T>& tape, const ModelGraph<T>& g, int input,
                               bool train_mode, bool weights_trainable) {
  GraphOnTape<T> out;
  auto wnode = [&](const std::string& name) {
    auto it = out.weight_nodes.find(name);
    if (it != out.weight_nodes.end()) return it->second;
    const Tensor<T>& w = g.weight(name);
    const int node = (weights_trainable && g.trainable(name)) ? tape.leaf(w)
                                                              : tape.constant(w);
    out.weight_nodes.emplace(name, node);
    return node;
  };

  const int frames = tape.val(input).dim(0);
  int cur = input;
  std::map<int, int> saved;
  const std::set<int> taps = g.skip_sources();

  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    const LayerSpec& l = g.layers[li];
    switch (l.kind) {
      case LayerKind::kConv:
        cur = ad::conv_freq(tape, cur, wnode(l.name + ".w"), wnode(l.name + ".b"),
                            l.stride);
        break;
      case LayerKind::kTConv:
        cur = ad::tconv_freq(tape, cur, wnode(l.name + ".w"), wnode(l.name + ".b"),
                             l.stride);
        break;
      case LayerKind::kBatchNorm: {
        const int gamma = wnode(l.name + ".gamma");
        const int beta = wnode(l.name + ".beta");
        if (train_mode) {
          auto bn = ad::bn_train(tape, cur, gamma, beta, static_cast<T>(kBnEps));
          cur = bn.y;
          out.bn_stats.push_back({l.name, bn.batch_mean, bn.batch_var});
        } else {
          cur = ad::bn_eval(tape, cur, gamma, beta,
                            g.weight(l.name + ".running_mean"),
                            g.weight(l.name + ".running_var"),
                            static_cast<T>(kBnEps));
        }
        break;
      }
      case LayerKind::kGru:
        cur = ad::gru_sequence(tape, cur, wnode(l.name + ".w_ih"),
                               wnode(l.name + ".w_hh"), wnode(l.name + ".b_ih"),
                               wnode(l.name + ".b_hh"), Tensor<T>({l.units}));
        break;
      case LayerKind::kReshape:
        if (l.reshape == ReshapeMode::kFlatten) {
          const Tensor<T>& v = tape.val(cur);
          cur = ad::reshape(tape, cur,
                            {frames, static_cast<int>(v.size()) / frames});
        } else {
          cur = ad::reshape(tape, cur, {frames, l.reshape_ch, l.reshape_bands});
        }
        break;
      case LayerKind::kConcatSkip: {
        auto it = saved.find(l.skip_source);
        if (it == saved.end()) throw StateError("skip source not available");
        cur = ad::concat_channels(tape, cur, it->second);
        break;
      }
      case LayerKind::kActivation:
        cur = l.act == Activation::kRelu ? ad::relu(tape, cur)
                                         : ad::sigmoid(tape, cur);
        break;
    }
    if (taps.count(static_cast<int>(li))) saved[static_cast<int>(li)] = cur;
  }

  out.output = cur;
  return out;
}

// Reference batch forward without gradients; values only.
template <typename T>
Tensor<T> forward_batch(const ModelGraph<T>& g, const Tensor<T>& features) {
  ad::Tape<T> tape;
  const int in = tape.constant(features);
  GraphOnTape<T> run = forward_on_tape(tape, g, in, /*train_mode=*/false,
                                       /*weights_trainable=*/false);
  return tape.val(run.output);
}

// EMA update of batch-norm running statistics after a committed train step.
template <typename T>
void commit_bn_stats(ModelGraph<T>& g,
                     const std::vector<typename GraphOnTape<T>::BnCapture>& stats) {
  for (const auto& s : stats) {
    Tensor<T>& mean = g.weight(s.layer + ".running_mean");
    Tensor<T>& var = g.weight(s.layer + ".running_var");
    for (std::size_t i = 0; i < mean.size(); ++i) {
      mean[i] = static_cast<T>((1.0 - kBnMomentum) * mean[i] +
                               kBnMomentum * s.mean[i]);
      var[i] = static_cast<T>((1.0 - kBnMomentum) * var[i] + kBnMomentum * s.var[i]);
    }
  }
}

}  // namespace melmask2
