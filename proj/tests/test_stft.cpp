#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "melmask2/stft.hpp"

using namespace melmask2;

namespace {

AudioBuffer random_audio(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  std::vector<double> s(n);
  for (double& v : s) v = dist(rng);
  return AudioBuffer(std::move(s), kEngineSampleRate);
}

AudioBuffer sine(double freq, std::size_t n, double amp = 0.5) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i)
    s[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / kEngineSampleRate);
  return AudioBuffer(std::move(s), kEngineSampleRate);
}

// Relative RMS error on the fully-overlapped interior.
double interior_rel_rms(const AudioBuffer& x, const AudioBuffer& y, int hop) {
  const std::size_t lo = static_cast<std::size_t>(hop);
  const std::size_t hi = std::min(x.size(), y.size()) - hop;
  double num = 0.0, den = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double d = x.samples[i] - y.samples[i];
    num += d * d;
    den += x.samples[i] * x.samples[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("hann window endpoints and errors") {
  const auto w = make_hann(640);
  CHECK(w[0] == 0.0);
  CHECK(w[320] == Catch::Approx(1.0).margin(1e-15));
  CHECK_THROWS_AS(make_hann(0), InvalidConfigError);
  CHECK_THROWS_AS(make_hann(641), InvalidConfigError);
}

TEST_CASE("hann satisfies constant overlap-add at hop N/2") {
  const int n = 640, hop = 320;
  const auto w = make_hann(n);
  // Interior samples of a long overlap-add of shifted windows.
  for (int pos = 0; pos < hop; ++pos) {
    const double sum = w[static_cast<std::size_t>(pos)] + w[static_cast<std::size_t>(pos + hop)];
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("weighted overlap-add normalization is exactly unity") {
  StftConfig cfg;
  const auto w = make_hann(cfg.window_len);
  const auto cov = ola_coverage(8, cfg);
  // Interior: contributions w^2 / coverage sum to one.
  for (std::size_t i = cfg.window_len; i + cfg.window_len < cov.size(); ++i) {
    const std::size_t a = i % static_cast<std::size_t>(cfg.hop);
    const double sum = (w[a] * w[a] + w[a + cfg.hop] * w[a + cfg.hop]) / cov[i];
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("stft peak bin for a pure tone") {
  StftConfig cfg;
  const auto spec = stft(sine(1000.0, 32000), cfg);
  int peak = 0;
  double best = 0.0;
  for (int f = 0; f < spec.bins; ++f) {
    const double m = std::abs(spec.at(4, f));
    if (m > best) {
      best = m;
      peak = f;
    }
  }
  CHECK(peak == 32);  // 1000 / 32000 * 1024
}

TEST_CASE("stft of silence is zero") {
  StftConfig cfg;
  AudioBuffer zero(std::vector<double>(8000, 0.0), kEngineSampleRate);
  const auto spec = stft(zero, cfg);
  for (const auto& v : spec.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("frame count for a 10 s clip") {
  StftConfig cfg;
  const int frames = stft_frame_count(320000, cfg);
  CHECK(frames >= 999);
  CHECK(frames <= 1001);
  CHECK(stft(random_audio(320000, 7), cfg).frames == frames);
}

TEST_CASE("stft input validation") {
  StftConfig cfg;
  CHECK_THROWS_AS(stft(random_audio(100, 1), cfg), InvalidInputError);
  AudioBuffer wrong_rate(std::vector<double>(8000, 0.1), 16000);
  CHECK_THROWS_AS(stft(wrong_rate, cfg), FormatError);
}

TEST_CASE("istft round trip on noise and tone") {
  StftConfig cfg;
  for (const AudioBuffer& x : {random_audio(32000, 3), sine(1000.0, 32000)}) {
    const AudioBuffer y = istft(stft(x, cfg));
    CHECK(interior_rel_rms(x, y, cfg.hop) < 1e-6);
  }
}

TEST_CASE("istft of a zero spectrogram is silence") {
  StftConfig cfg;
  auto spec = stft(random_audio(16000, 9), cfg);
  for (auto& v : spec.data) v = 0.0;
  const AudioBuffer y = istft(spec);
  for (double v : y.samples) CHECK(v == 0.0);
}

TEST_CASE("istft validates its config") {
  StftConfig cfg;
  auto spec = stft(random_audio(16000, 11), cfg);
  spec.bins -= 1;  // no longer matches fft_size/2 + 1
  CHECK_THROWS_AS(istft(spec), InvalidConfigError);
}

TEST_CASE("round trip property over random signals") {
  StftConfig cfg;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const AudioBuffer x = random_audio(24000, seed);
    CHECK(interior_rel_rms(x, istft(stft(x, cfg)), cfg.hop) < 1e-6);
  }
}

TEST_CASE("parseval consistency per frame") {
  StftConfig cfg;
  const AudioBuffer x = random_audio(4000, 21);
  const auto spec = stft(x, cfg);
  const auto w = make_hann(cfg.window_len);

  for (int t = 0; t < spec.frames; ++t) {
    double time_energy = 0.0;
    for (int n = 0; n < cfg.window_len; ++n) {
      const double v = x.samples[static_cast<std::size_t>(t) * cfg.hop + n] * w[static_cast<std::size_t>(n)];
      time_energy += v * v;
    }
    double freq_energy = 0.0;
    for (int f = 0; f < spec.bins; ++f) {
      const double m2 = std::norm(spec.at(t, f));
      freq_energy += (f == 0 || f == spec.bins - 1) ? m2 : 2.0 * m2;
    }
    freq_energy /= cfg.fft_size;
    CHECK(freq_energy == Catch::Approx(time_energy).epsilon(1e-6));
  }
}
