#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "melmask2/dataset.hpp"
#include "melmask2/gradcheck_suite.hpp"
#include "melmask2/losses.hpp"

using namespace melmask2;

namespace {

GainTensor single_gain(double v, GainScale scale = GainScale::kMel) {
  GainTensor g;
  g.scale = scale;
  g.values = Tensor<double>({1, 1});
  g.values[0] = v;
  return g;
}

Tensor<double> single(double v) {
  Tensor<double> t({1, 1});
  t[0] = v;
  return t;
}

ComplexSpectrogram one_bin(std::complex<double> v) {
  ComplexSpectrogram s;
  s.frames = 1;
  s.bins = 1;
  s.data = {v};
  return s;
}

}  // namespace

TEST_CASE("gain loss closed forms") {
  CHECK(gain_loss(single_gain(0.7), single_gain(0.7), 0.5).value == 0.0);
  CHECK(gain_loss(single_gain(1.0), single_gain(0.0), 0.5).value ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(gain_loss(single_gain(1.0), single_gain(0.0), 2.0).value ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(gain_loss(single_gain(0.0), single_gain(0.1), 0.5).value ==
        Catch::Approx(0.1).margin(1e-12));
  CHECK(gain_loss(single_gain(0.0), single_gain(0.1), 2.0).value ==
        Catch::Approx(1e-4).margin(1e-12));
  CHECK_THROWS_AS(gain_loss(single_gain(0.5), single_gain(0.5), 0.0),
                  InvalidConfigError);
  CHECK_THROWS_AS(gain_loss(single_gain(0.5), single_gain(1.5), 0.5),
                  InvalidInputError);
}

TEST_CASE("gain power factor shifts the emphasis") {
  // Errors near g = 0 weigh more under p = 0.5; near g = 1 the order flips.
  const double near0_p05 = gain_loss(single_gain(0.05), single_gain(0.1), 0.5).value;
  const double near0_p2 = gain_loss(single_gain(0.05), single_gain(0.1), 2.0).value;
  CHECK(near0_p05 > near0_p2);
  const double near1_p05 = gain_loss(single_gain(0.9), single_gain(0.95), 0.5).value;
  const double near1_p2 = gain_loss(single_gain(0.9), single_gain(0.95), 2.0).value;
  CHECK(near1_p05 < near1_p2);
}

TEST_CASE("magnitude loss closed forms") {
  CHECK(mag_loss(single(4.0), single(4.0), 0.5).value == 0.0);
  CHECK(mag_loss(single(4.0), single(1.0), 0.5).value ==
        Catch::Approx(1.0).margin(1e-12));
  // beta = 1 reduces to plain MSE.
  CHECK(mag_loss(single(4.0), single(1.0), 1.0).value ==
        Catch::Approx(9.0).margin(1e-12));
  CHECK_THROWS_AS(mag_loss(single(-1.0), single(1.0), 0.5), InvalidInputError);
  CHECK_THROWS_AS(mag_loss(single(1.0), single(1.0), 1.5), InvalidConfigError);
}

TEST_CASE("asymmetric loss penalizes only under-estimation") {
  CHECK(asym_loss(single(4.0), single(1.0), 0.5).value ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(asym_loss(single(1.0), single(4.0), 0.5).value == 0.0);
  CHECK(asym_loss(single(2.0), single(2.0), 0.5).value == 0.0);
}

TEST_CASE("si-snr loss closed form and caps") {
  AudioBuffer s(std::vector<double>{1.0, 0.0}, kEngineSampleRate);
  AudioBuffer est(std::vector<double>{2.0, 1.0}, kEngineSampleRate);
  // kappa = 2, loss = -10 log10(4 / 1).
  CHECK(sisnr_loss(s, est).value == Catch::Approx(-6.0206).margin(1e-4));

  AudioBuffer scaled(std::vector<double>{3.0, 0.0}, kEngineSampleRate);
  CHECK(sisnr_loss(s, scaled).value == -kSisnrCapDb);

  AudioBuffer orth(std::vector<double>{0.0, 1.0}, kEngineSampleRate);
  CHECK(sisnr_loss(s, orth).value == kSisnrCapDb);

  AudioBuffer zero(std::vector<double>{0.0, 0.0}, kEngineSampleRate);
  CHECK_THROWS_AS(sisnr_loss(zero, est), InvalidInputError);
}

TEST_CASE("kappa is the optimal scale") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> s(64), e(64);
  for (auto& v : s) v = dist(rng);
  for (auto& v : e) v = dist(rng);

  double dot = 0.0, ss = 0.0;
  for (int i = 0; i < 64; ++i) {
    dot += e[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
    ss += s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
  }
  const double kappa = dot / ss;
  auto residual = [&](double k) {
    double r = 0.0;
    for (int i = 0; i < 64; ++i) {
      const double d = k * s[static_cast<std::size_t>(i)] - e[static_cast<std::size_t>(i)];
      r += d * d;
    }
    return r;
  };
  const double best = residual(kappa);
  std::uniform_real_distribution<double> perturb(-0.5, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const double delta = perturb(rng);
    CHECK(best <= residual(kappa + delta) + 1e-12);
  }
}

TEST_CASE("si-snr loss scale invariance pre-cap") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  std::vector<double> sv(512), ev(512);
  for (auto& v : sv) v = dist(rng);
  for (auto& v : ev) v = dist(rng);
  AudioBuffer s(sv, kEngineSampleRate), e(ev, kEngineSampleRate);
  const double base = sisnr_loss(s, e).value;
  REQUIRE(std::abs(base) < kSisnrCapDb);  // pre-cap regime
  for (double a : {2.0, 0.5, 8.0}) {
    AudioBuffer scaled = e;
    for (double& v : scaled.samples) v *= a;
    const double rel = std::abs(sisnr_loss(s, scaled).value - base) /
                       std::max(std::abs(base), 1e-12);
    CHECK(rel < 1e-9);
  }
}

TEST_CASE("combined time-domain loss") {
  const ToyDataset ds = synth_toy_dataset(1, 0.3, 51);
  StftConfig cfg;
  const AudioBuffer& clean = ds.clean[0];

  // est = clean: spectral terms vanish, SI-SNR caps at -60 -> total -120.
  CHECK(loss_L1(clean, clean, cfg).value == Catch::Approx(-120.0).margin(1e-9));

  // Additivity against separately computed components.
  const AudioBuffer est = mix_at_snr(clean, ds.noise[0], 5.0);
  const ComplexSpectrogram cs = stft(clean, cfg);
  const ComplexSpectrogram es = stft(est, cfg);
  const Tensor<double> mc = magnitudes(cs, 512);
  const Tensor<double> me = magnitudes(es, 512);
  const double expected = 512.0 * (mag_loss(mc, me, 0.5).value +
                                   asym_loss(mc, me, 0.5).value) +
                          2.0 * sisnr_loss(clean, est).value;
  CHECK(loss_L1(clean, est, cfg).value == Catch::Approx(expected).epsilon(1e-9));
}

TEST_CASE("phase loss closed forms") {
  CHECK(phase_loss(one_bin({1.0, 0.0}), one_bin({1.0, 0.0}), 0.5).value == 0.0);
  // Equal unit magnitudes, phase gap pi: squared chord of diameter 2.
  CHECK(phase_loss(one_bin({1.0, 0.0}), one_bin({-1.0, 0.0}), 0.5).value ==
        Catch::Approx(4.0).margin(1e-12));
  // Zero clean against magnitude m: m^{2c}.
  const double m = 0.7, c = 0.5;
  CHECK(phase_loss(one_bin({0.0, 0.0}), one_bin({m, 0.0}), c).value ==
        Catch::Approx(std::pow(m, 2.0 * c)).margin(1e-12));

  ComplexSpectrogram wrong;
  wrong.frames = 1;
  wrong.bins = 2;
  wrong.data = {{1.0, 0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(phase_loss(one_bin({1.0, 0.0}), wrong, 0.5), InvalidInputError);
}

TEST_CASE("L2 equals the sum of its components") {
  const ToyDataset ds = synth_toy_dataset(1, 0.3, 53);
  StftConfig cfg;
  const ComplexSpectrogram cs = stft(ds.clean[0], cfg);
  const ComplexSpectrogram es = stft(mix_at_snr(ds.clean[0], ds.noise[0], 0.0), cfg);

  CHECK(loss_L2(cs, cs).value == 0.0);

  // Components on the 512 loss bands.
  ComplexSpectrogram cs512 = cs, es512 = es;
  cs512.bins = es512.bins = 512;
  cs512.data.clear();
  es512.data.clear();
  for (int t = 0; t < cs.frames; ++t)
    for (int f = 0; f < 512; ++f) {
      cs512.data.push_back(cs.at(t, f));
      es512.data.push_back(es.at(t, f));
    }
  const double expected =
      mag_loss(magnitudes(cs512, 512), magnitudes(es512, 512), 0.5).value +
      phase_loss(cs512, es512, 0.5).value;
  CHECK(loss_L2(cs, es).value == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("losses vanish at their global minimum") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  GainTensor g;
  g.scale = GainScale::kMel;
  g.values = Tensor<double>({4, 8});
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = dist(rng);
  CHECK(gain_loss(g, g, 0.5).value == 0.0);
  CHECK(gain_loss(g, g, 2.0).value == 0.0);

  Tensor<double> mag({4, 8});
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = dist(rng) + 0.1;
  CHECK(mag_loss(mag, mag, 0.5).value == 0.0);
  CHECK(asym_loss(mag, mag, 0.5).value == 0.0);
}

TEST_CASE("gradient suite smoke run") {
  const auto suite = run_gradcheck_suite(/*probes_per_loss=*/8, /*seed=*/3,
                                         /*frames=*/6);
  REQUIRE(suite.size() == 8);
  for (const auto& entry : suite) {
    INFO(entry.name << "\n" << entry.report.to_text());
    CHECK(entry.report.max_rel_err < 1e-4);
  }
}
