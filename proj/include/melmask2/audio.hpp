#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "melmask2/errors.hpp"

namespace melmask2 {

inline constexpr int kEngineSampleRate = 32000;

// Mono audio at a fixed sample rate. Samples are nominally in [-1, 1];
// processing never clips, only file output does.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kEngineSampleRate;

  AudioBuffer() = default;
  AudioBuffer(std::vector<double> s, int rate)
      : samples(std::move(s)), sample_rate(rate) {
    if (sample_rate <= 0) throw InvalidConfigError("sample_rate must be > 0");
  }

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  void check_finite() const {
    for (double v : samples)
      if (!std::isfinite(v)) throw NumericError("non-finite audio sample");
  }
};

inline double signal_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

}  // namespace melmask2
