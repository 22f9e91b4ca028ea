#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/errors.hpp"

namespace melmask2 {

inline constexpr double kSdrCapDb = 60.0;

// speech + alpha * noise with alpha chosen so the mixture hits the target
// SNR exactly (powers measured over the full clip, no activity weighting).
inline AudioBuffer mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise,
                              double snr_db) {
  if (speech.size() != noise.size())
    throw InvalidInputError("mix_at_snr needs equal-length signals");
  if (speech.sample_rate != noise.sample_rate)
    throw InvalidInputError("mix_at_snr sample-rate mismatch");
  const double p_s = signal_power(speech.samples);
  const double p_n = signal_power(noise.samples);
  if (p_s <= 0.0 || p_n <= 0.0)
    throw InvalidInputError("mix_at_snr needs nonzero-power inputs");

  const double alpha = std::sqrt(p_s / (p_n * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> out(speech.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = speech.samples[i] + alpha * noise.samples[i];
  return AudioBuffer(std::move(out), speech.sample_rate);
}

// Scale-invariant SDR in dB: project the estimate onto the reference, score
// target power against residual power, cap at +/-60 dB.
inline double si_sdr(const AudioBuffer& reference, const AudioBuffer& estimate) {
  if (reference.size() != estimate.size())
    throw InvalidInputError("si_sdr needs equal-length signals");
  const std::vector<double>& s = reference.samples;
  const std::vector<double>& e = estimate.samples;

  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dot += e[i] * s[i];
    ref_energy += s[i] * s[i];
  }
  if (ref_energy <= 0.0) throw InvalidInputError("si_sdr reference has zero power");

  const double kappa = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = kappa * s[i];
    const double r = e[i] - t;
    target += t * t;
    residual += r * r;
  }
  if (residual <= 0.0) return kSdrCapDb;
  if (target <= 0.0) return -kSdrCapDb;
  const double db = 10.0 * std::log10(target / residual);
  return db > kSdrCapDb ? kSdrCapDb : (db < -kSdrCapDb ? -kSdrCapDb : db);
}

struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sd / sqrt(n), normal approximation
  std::size_t n = 0;
};

inline MeanCi mean_ci95(const std::vector<double>& xs) {
  MeanCi r;
  r.n = xs.size();
  if (xs.empty()) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  r.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  return r;
}

// One evaluation cell: a (pair, SNR) mixture scored before and after
// enhancement under some labeled condition.
struct EvalRow {
  std::string condition;
  double snr_db = 0.0;
  double sisdr_in = 0.0;
  double sisdr_out = 0.0;
};

}  // namespace melmask2
