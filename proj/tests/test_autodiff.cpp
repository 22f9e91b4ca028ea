#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>

#include "melmask2/autodiff.hpp"
#include "melmask2/autodiff_nn.hpp"
#include "melmask2/losses.hpp"
#include "melmask2/tape_dsp.hpp"

using namespace melmask2;

namespace {

Tensor<double> rnd(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                   double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

// Reduces any node to a scalar via a fixed random weighting so every output
// element contributes to the probe.
int weighted_sum(ad::Tape<double>& t, int node, std::uint64_t seed) {
  const auto& v = t.val(node);
  std::mt19937_64 rng(seed);
  Tensor<double> w(v.shape());
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
  const int flat_n = static_cast<int>(v.size());
  const int node_flat = ad::reshape(t, node, {flat_n});
  return ad::dot(t, node_flat, t.constant(w.reshaped({flat_n})));
}

using BuildFn = std::function<int(ad::Tape<double>&, const std::vector<int>&)>;

double op_max_rel_err(const BuildFn& build, std::vector<Tensor<double>> params,
                      int probes = 24, std::uint64_t seed = 99) {
  LossEval eval = [&build](const std::vector<Tensor<double>>& p,
                           std::vector<Tensor<double>>* grads) {
    ad::Tape<double> t;
    std::vector<int> leaves;
    for (const auto& param : p) leaves.push_back(t.leaf(param));
    const int loss = build(t, leaves);
    if (grads) {
      t.backward(loss);
      grads->clear();
      for (int leaf : leaves)
        grads->push_back(t.has_grad(leaf)
                             ? t.grad(leaf)
                             : Tensor<double>(t.val(leaf).shape()));
    }
    return t.val(loss)[0];
  };
  const GradCheckReport report = grad_check(eval, std::move(params), probes, seed);
  return report.max_rel_err;
}

}  // namespace

TEST_CASE("elementwise and reduction ops match finite differences") {
  std::mt19937_64 rng(1);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(
                  t, ad::mul(t, ad::add(t, l[0], l[1]), ad::sub(t, l[0], l[1])), 5);
            },
            {rnd({4, 6}, rng), rnd({4, 6}, rng)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              const int s = ad::sigmoid(t, l[0]);
              const int h = ad::tanh_op(t, ad::scale(t, l[0], 0.7));
              return weighted_sum(t, ad::mul(t, s, h), 6);
            },
            {rnd({3, 5}, rng, -2.0, 2.0)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(t, ad::pow_guarded(t, l[0], 0.5), 7);
            },
            {rnd({4, 4}, rng, 0.05, 2.0)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return ad::s_div(t, ad::sumsq(t, l[0]), ad::dot(t, l[1], l[1]));
            },
            {rnd({12}, rng), rnd({12}, rng, 0.5, 1.5)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return ad::s_ln(t, ad::add_scalar(t, ad::sumsq(t, l[0]), 0.3));
            },
            {rnd({9}, rng)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              const int m = ad::magnitude(t, l[0], l[1]);
              return weighted_sum(t, m, 8);
            },
            {rnd({3, 7}, rng, 0.2, 1.0), rnd({3, 7}, rng, 0.2, 1.0)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              const int s = ad::mean_all(t, ad::square(t, l[0]));
              return weighted_sum(t, ad::scale_by_scalar(t, l[1], s), 9);
            },
            {rnd({5}, rng), rnd({7}, rng)}) < 1e-6);
}

TEST_CASE("shape ops route gradients correctly") {
  std::mt19937_64 rng(2);
  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              const int cat = ad::concat_cols(t, l[0], l[1]);
              const int left = ad::slice_cols(t, cat, 1, 5);
              const int ch = ad::stack_channels(t, {left, left});
              const int one = ad::slice_channel(t, ch, 0);
              return weighted_sum(t, one, 10);
            },
            {rnd({3, 4}, rng), rnd({3, 4}, rng)}) < 1e-6);

  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              const int r0 = ad::slice_row(t, l[0], 0);
              const int r1 = ad::slice_row(t, l[0], 2);
              const int stacked = ad::stack_rows(t, {r0, r1, r0});
              return weighted_sum(t, stacked, 11);
            },
            {rnd({3, 6}, rng)}) < 1e-6);
}

TEST_CASE("matmul and matvec match finite differences") {
  std::mt19937_64 rng(3);
  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(t, ad::matmul(t, l[0], l[1]), 12);
            },
            {rnd({4, 5}, rng), rnd({5, 3}, rng)}) < 1e-6);
  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(t, ad::matvec(t, l[0], l[1]), 13);
            },
            {rnd({6}, rng), rnd({6, 4}, rng)}) < 1e-6);
}

TEST_CASE("conv and tconv kernels match finite differences") {
  std::mt19937_64 rng(4);
  for (int stride : {1, 2}) {
    CHECK(op_max_rel_err(
              [stride](ad::Tape<double>& t, const std::vector<int>& l) {
                return weighted_sum(t, ad::conv_freq(t, l[0], l[1], l[2], stride),
                                    14 + stride);
              },
              {rnd({3, 2, 8}, rng), rnd({3, 2, 3}, rng), rnd({3}, rng)}) < 1e-6);
    CHECK(op_max_rel_err(
              [stride](ad::Tape<double>& t, const std::vector<int>& l) {
                return weighted_sum(t, ad::tconv_freq(t, l[0], l[1], l[2], stride),
                                    16 + stride);
              },
              {rnd({3, 2, 8}, rng), rnd({3, 2, 3}, rng), rnd({3}, rng)}) < 1e-6);
  }
}

TEST_CASE("batch norm (train and eval) matches finite differences") {
  std::mt19937_64 rng(5);
  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              auto bn = ad::bn_train(t, l[0], l[1], l[2], 1e-5);
              return weighted_sum(t, bn.y, 18);
            },
            {rnd({4, 3, 6}, rng), rnd({3}, rng, 0.5, 1.5), rnd({3}, rng)}) < 1e-6);

  const Tensor<double> mean = rnd({3}, rng, -0.2, 0.2);
  const Tensor<double> var = rnd({3}, rng, 0.5, 1.5);
  CHECK(op_max_rel_err(
            [&](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(
                  t, ad::bn_eval(t, l[0], l[1], l[2], mean, var, 1e-5), 19);
            },
            {rnd({4, 3, 6}, rng), rnd({3}, rng, 0.5, 1.5), rnd({3}, rng)}) < 1e-6);
}

TEST_CASE("gru sequence matches finite differences") {
  std::mt19937_64 rng(6);
  const int hidden = 3;
  CHECK(op_max_rel_err(
            [hidden](ad::Tape<double>& t, const std::vector<int>& l) {
              const int out = ad::gru_sequence(t, l[0], l[1], l[2], l[3], l[4],
                                               Tensor<double>({hidden}));
              return weighted_sum(t, out, 20);
            },
            {rnd({5, 4}, rng), rnd({4, 9}, rng), rnd({3, 9}, rng), rnd({9}, rng),
             rnd({9}, rng)},
            30) < 1e-6);
}

TEST_CASE("stft and istft tape ops match finite differences") {
  std::mt19937_64 rng(7);
  StftConfig cfg;
  CHECK(op_max_rel_err(
            [&cfg](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(t, ad::stft_op(t, l[0], cfg), 21);
            },
            {rnd({1700}, rng, -0.4, 0.4)},
            30) < 1e-6);
  CHECK(op_max_rel_err(
            [&cfg](ad::Tape<double>& t, const std::vector<int>& l) {
              const int spec = ad::stack_channels(t, {l[0], l[1]});
              const int full = ad::reshape(t, spec, {3, 2, 513});
              return weighted_sum(t, ad::istft_op(t, full, cfg), 22);
            },
            {rnd({3, 513}, rng), rnd({3, 513}, rng)},
            30) < 1e-6);
}

TEST_CASE("compressed complex and post-filter ops match finite differences") {
  std::mt19937_64 rng(8);
  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              const auto cc = ad::compress_complex(t, l[0], l[1], 0.5);
              return ad::add(t, weighted_sum(t, cc.re, 23),
                             weighted_sum(t, cc.im, 24));
            },
            {rnd({4, 6}, rng, 0.1, 1.0), rnd({4, 6}, rng, 0.1, 1.0)}) < 1e-6);
  CHECK(op_max_rel_err(
            [](ad::Tape<double>& t, const std::vector<int>& l) {
              return weighted_sum(t, ad::sin_postfilter_op(t, l[0]), 25);
            },
            {rnd({5, 5}, rng, 0.02, 0.98)}) < 1e-6);
}

TEST_CASE("quadratic toy loss is machine-exact") {
  std::mt19937_64 rng(9);
  const Tensor<double> target = rnd({16}, rng);
  LossEval eval = [&target](const std::vector<Tensor<double>>& p,
                            std::vector<Tensor<double>>* grads) {
    ad::Tape<double> t;
    const int x = t.leaf(p[0]);
    const int loss = ad::sumsq(t, ad::sub(t, x, t.constant(target)));
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x)};
    }
    return t.val(loss)[0];
  };
  const auto report = grad_check(eval, {rnd({16}, rng)}, 30, 5);
  CHECK(report.max_rel_err < 1e-8);
  CHECK(report.n_skipped == 0);
}

TEST_CASE("probing a kink is flagged and skipped") {
  // mean(relu(x)) probed exactly at x = 0: one-sided differences disagree.
  LossEval eval = [](const std::vector<Tensor<double>>& p,
                     std::vector<Tensor<double>>* grads) {
    ad::Tape<double> t;
    const int x = t.leaf(p[0]);
    const int loss = ad::mean_all(t, ad::relu(t, x));
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(x)};
    }
    return t.val(loss)[0];
  };
  Tensor<double> at_kink({1});
  at_kink[0] = 0.0;
  const auto report = grad_check(eval, {at_kink}, 4, 6);
  CHECK(report.n_skipped == 4);
  for (const auto& p : report.probes) CHECK(p.skipped);
}

TEST_CASE("constants do not accumulate gradients") {
  ad::Tape<double> t;
  std::mt19937_64 rng(11);
  const int c = t.constant(rnd({4}, rng));
  const int x = t.leaf(rnd({4}, rng));
  const int loss = ad::sumsq(t, ad::mul(t, x, c));
  t.backward(loss);
  CHECK(t.has_grad(x));
  CHECK_FALSE(t.has_grad(c));
}
