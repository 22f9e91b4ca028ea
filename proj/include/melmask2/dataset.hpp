#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/tensor.hpp"

namespace melmask2 {

// Desk-scale stand-in for real speech/noise corpora: harmonic complexes with
// slow amplitude envelopes against white or band-passed noise.
struct ToyDataset {
  std::vector<AudioBuffer> clean;
  std::vector<AudioBuffer> noise;
  std::uint64_t seed = 0;

  std::size_t size() const { return clean.size(); }
};

namespace dataset_detail {

inline void normalize_rms(std::vector<double>& x, double target_rms) {
  double p = signal_power(x);
  if (p <= 0.0) return;
  const double scale = target_rms / std::sqrt(p);
  for (double& v : x) v *= scale;
}

inline std::vector<double> one_pole_lowpass(const std::vector<double>& x,
                                            double cutoff_hz, int sample_rate) {
  const double a =
      std::exp(-2.0 * std::numbers::pi * cutoff_hz / sample_rate);
  std::vector<double> y(x.size());
  double state = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    state = (1.0 - a) * x[i] + a * state;
    y[i] = state;
  }
  return y;
}

}  // namespace dataset_detail

inline ToyDataset synth_toy_dataset(int n_pairs, double duration_s,
                                    std::uint64_t seed) {
  if (n_pairs <= 0) throw InvalidConfigError("n_pairs must be > 0");
  if (duration_s <= 0.0) throw InvalidConfigError("duration must be > 0");

  ToyDataset ds;
  ds.seed = seed;
  std::mt19937_64 rng = named_rng(seed, "toy-dataset");
  const auto n_samples =
      static_cast<std::size_t>(duration_s * kEngineSampleRate);

  std::uniform_int_distribution<int> tone_count(3, 5);
  std::uniform_real_distribution<double> fundamental(100.0, 320.0);
  std::uniform_int_distribution<int> harmonic(1, 8);
  std::uniform_real_distribution<double> env_rate(0.5, 3.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int p = 0; p < n_pairs; ++p) {
    std::vector<double> clean(n_samples, 0.0);
    const double f0 = fundamental(rng);
    const int tones = tone_count(rng);
    for (int k = 0; k < tones; ++k) {
      const int h = harmonic(rng);
      const double freq = f0 * h;
      const double amp = 1.0 / h;
      const double rate = env_rate(rng);
      const double tone_phase = phase(rng);
      const double env_phase = phase(rng);
      for (std::size_t i = 0; i < n_samples; ++i) {
        const double t = static_cast<double>(i) / kEngineSampleRate;
        const double env =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * rate * t + env_phase));
        clean[i] += amp * env *
                    std::sin(2.0 * std::numbers::pi * freq * t + tone_phase);
      }
    }
    dataset_detail::normalize_rms(clean, 0.1);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(n_samples);
    for (double& v : noise) v = gauss(rng);
    if (unit(rng) < 0.5) {
      // Band-pass by differencing two one-pole lowpasses.
      std::uniform_real_distribution<double> lo_cut(200.0, 1000.0);
      std::uniform_real_distribution<double> hi_cut(2000.0, 8000.0);
      const double lo = lo_cut(rng);
      const double hi = hi_cut(rng);
      auto wide = dataset_detail::one_pole_lowpass(noise, hi, kEngineSampleRate);
      auto narrow = dataset_detail::one_pole_lowpass(noise, lo, kEngineSampleRate);
      for (std::size_t i = 0; i < n_samples; ++i) noise[i] = wide[i] - narrow[i];
    }
    dataset_detail::normalize_rms(noise, 0.1);

    ds.clean.emplace_back(std::move(clean), kEngineSampleRate);
    ds.noise.emplace_back(std::move(noise), kEngineSampleRate);
  }
  return ds;
}

}  // namespace melmask2
