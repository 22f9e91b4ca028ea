#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "melmask2/mel.hpp"

using namespace melmask2;

namespace {
const MelFilterBank& fb() {
  static const MelFilterBank bank = build_mel_filterbank(64, 512, 32000);
  return bank;
}
}  // namespace

TEST_CASE("filter bank shape and coverage") {
  CHECK(fb().weights.dim(0) == 64);
  CHECK(fb().weights.dim(1) == 512);
  for (int m = 0; m < 64; ++m) {
    double row_max = 0.0;
    for (int f = 0; f < 512; ++f) row_max = std::max(row_max, fb().weights.at(m, f));
    CHECK(row_max > 0.0);
    CHECK(row_max <= 1.0 + 1e-12);
  }
  // Every bin above DC is covered by at least one triangle.
  for (int f = 1; f < 512; ++f) {
    double col = 0.0;
    for (int m = 0; m < 64; ++m) col += fb().weights.at(m, f);
    CHECK(col > 0.0);
  }
  CHECK_THROWS_AS(build_mel_filterbank(512, 512, 32000), InvalidConfigError);
}

TEST_CASE("interp rows sum to one over covered bins") {
  for (int f = 1; f < 512; ++f) {
    double sum = 0.0;
    for (int m = 0; m < 64; ++m) sum += fb().interp.at(f, m);
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("to_mel basics") {
  Tensor<double> ones({2, 512});
  ones.fill(1.0);
  const auto mel = to_mel(ones, fb());
  for (std::size_t i = 0; i < mel.size(); ++i) CHECK(mel[i] > 0.0);

  Tensor<double> zeros({2, 512});
  const auto mz = to_mel(zeros, fb());
  for (std::size_t i = 0; i < mz.size(); ++i) CHECK(mz[i] == 0.0);

  Tensor<double> neg({1, 512});
  neg[3] = -1.0;
  CHECK_THROWS_AS(to_mel(neg, fb()), InvalidInputError);
}

TEST_CASE("single-bin impulse excites at most two mel bands") {
  for (int k : {5, 40, 200, 500}) {
    Tensor<double> imp({1, 512});
    imp.at(0, k) = 1.0;
    const auto mel = to_mel(imp, fb());
    int nonzero = 0;
    for (int m = 0; m < 64; ++m) nonzero += mel.at(0, m) > 0.0 ? 1 : 0;
    CHECK(nonzero >= 1);
    CHECK(nonzero <= 2);
  }
}

TEST_CASE("to_mel is linear") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  Tensor<double> m({3, 512});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
  Tensor<double> m2 = m;
  for (std::size_t i = 0; i < m2.size(); ++i) m2[i] *= 2.5;
  const auto a = to_mel(m, fb());
  const auto b = to_mel(m2, fb());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(b[i] == Catch::Approx(2.5 * a[i]).margin(1e-12));
}

TEST_CASE("log compression") {
  Tensor<double> x({1, 3});
  x[0] = 1.0 - kEpsLog;
  x[1] = 0.0;
  x[2] = 0.5;
  const auto y = log_compress(x);
  CHECK(y[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(y[1] == Catch::Approx(std::log(1e-7)).margin(1e-6));
  CHECK(y[1] == Catch::Approx(-16.118).margin(1e-3));
  CHECK(y[1] < y[2]);

  Tensor<double> neg({1, 1});
  neg[0] = -0.1;
  CHECK_THROWS_AS(log_compress(neg), InvalidInputError);
}

TEST_CASE("interpolation preserves constants on covered bins") {
  for (double c : {0.0, 0.5, 1.0}) {
    GainTensor g;
    g.scale = GainScale::kMel;
    g.values = Tensor<double>({2, 64});
    g.values.fill(c);
    const GainTensor lin = interpolate_gains(g, fb());
    CHECK(lin.scale == GainScale::kLinear);
    for (int t = 0; t < 2; ++t)
      for (int f = 1; f < 512; ++f)
        CHECK(lin.values.at(t, f) == Catch::Approx(c).margin(1e-9));
  }
}

TEST_CASE("interpolation rejects bad input") {
  GainTensor g;
  g.scale = GainScale::kLinear;
  g.values = Tensor<double>({1, 64});
  CHECK_THROWS_AS(interpolate_gains(g, fb()), InvalidInputError);

  g.scale = GainScale::kMel;
  g.values[0] = 1.5;
  CHECK_THROWS_AS(interpolate_gains(g, fb()), InvalidInputError);
}

TEST_CASE("gain round trip through measurement is the identity on constants") {
  // Apply constant interpolated gains to a spectrum, then re-measure mel
  // gains as the ratio of mel magnitudes.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(0.1, 2.0);
  Tensor<double> mag({3, 512});
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = dist(rng);

  const double c = 0.37;
  GainTensor g;
  g.scale = GainScale::kMel;
  g.values = Tensor<double>({3, 64});
  g.values.fill(c);
  const GainTensor lin = interpolate_gains(g, fb());

  Tensor<double> masked = mag;
  for (int t = 0; t < 3; ++t)
    for (int f = 0; f < 512; ++f) masked.at(t, f) *= lin.values.at(t, f);

  const GainTensor measured =
      oracle_gains(to_mel(masked, fb()), to_mel(mag, fb()), GainScale::kMel);
  for (std::size_t i = 0; i < measured.values.size(); ++i)
    CHECK(measured.values[i] == Catch::Approx(c).margin(1e-6));
}

TEST_CASE("oracle gain cases") {
  Tensor<double> s({1, 4}), x({1, 4});
  s[0] = 2.0; x[0] = 2.0;  // equal -> 1
  s[1] = 0.0; x[1] = 1.0;  // silent target -> 0
  s[2] = 3.0; x[2] = 4.0;  // 0.75
  s[3] = 5.0; x[3] = 4.0;  // clipped to 1
  const GainTensor g = oracle_gains(s, x, GainScale::kLinear);
  CHECK(g.values[0] == Catch::Approx(1.0).margin(1e-7));
  CHECK(g.values[1] == 0.0);
  CHECK(g.values[2] == Catch::Approx(0.75).margin(1e-7));
  CHECK(g.values[3] == 1.0);

  Tensor<double> bad({2, 4});
  CHECK_THROWS_AS(oracle_gains(s, bad, GainScale::kLinear), InvalidInputError);
}

TEST_CASE("oracle gains are invariant under joint scaling") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(0.01, 3.0);
  Tensor<double> s({2, 64}), x({2, 64});
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = dist(rng);
    x[i] = dist(rng);
  }
  const GainTensor a = oracle_gains(s, x, GainScale::kMel);
  Tensor<double> s4 = s, x4 = x;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s4[i] *= 4.0;
    x4[i] *= 4.0;
  }
  const GainTensor b = oracle_gains(s4, x4, GainScale::kMel);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(b.values[i] == Catch::Approx(a.values[i]).margin(1e-7));
}
