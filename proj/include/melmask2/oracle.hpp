#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/mel.hpp"
#include "melmask2/metrics.hpp"
#include "melmask2/stft.hpp"

namespace melmask2 {

// SI-SDR per SNR for the four oracle reconstruction conditions: linear-scale
// oracle gains, Mel-scale oracle gains interpolated back, ideal magnitude
// with noisy phase (S1), and the closest noisy-phase vector (S2).
struct OracleReport {
  struct Row {
    double snr_db = 0.0;
    double sisdr_oracle_linear = 0.0;
    double sisdr_oracle_mel = 0.0;
    double sisdr_mag_noisy_phase = 0.0;
    double sisdr_closest_noisy_phase = 0.0;
  };
  std::vector<Row> rows;
};

// S1 = |S| e^{i theta_X}: keeps the true magnitude, inherits the noisy phase.
inline ComplexSpectrogram ideal_mag_noisy_phase(const ComplexSpectrogram& clean,
                                                const ComplexSpectrogram& noisy) {
  clean.check_shape_match(noisy);
  ComplexSpectrogram out = noisy;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double mag_s = std::abs(clean.data[i]);
    const double mag_x = std::abs(noisy.data[i]);
    out.data[i] = mag_x > 0.0 ? noisy.data[i] * (mag_s / mag_x)
                              : std::complex<double>(mag_s, 0.0);
  }
  return out;
}

// S2 = max(0, Re(S e^{-i theta_X})) e^{i theta_X}: the projection of S onto
// the noisy-phase ray, i.e. the closest achievable vector for any method
// that keeps the noisy phase.
inline ComplexSpectrogram closest_noisy_phase(const ComplexSpectrogram& clean,
                                              const ComplexSpectrogram& noisy) {
  clean.check_shape_match(noisy);
  ComplexSpectrogram out = noisy;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double mag_x = std::abs(noisy.data[i]);
    if (mag_x > 0.0) {
      const std::complex<double> unit = noisy.data[i] / mag_x;
      const double proj =
          clean.data[i].real() * unit.real() + clean.data[i].imag() * unit.imag();
      out.data[i] = unit * std::max(0.0, proj);
    } else {
      // Zero noisy bin carries no phase; the ray degenerates to the origin.
      out.data[i] = {0.0, 0.0};
    }
  }
  return out;
}

namespace oracle_detail {

// Score a resynthesized estimate against the clean reference on the
// fully-overlapped interior.
inline double sisdr_resynth(const AudioBuffer& clean, const ComplexSpectrogram& est,
                            const StftConfig& cfg) {
  AudioBuffer audio = istft(est);
  const std::size_t lo = static_cast<std::size_t>(cfg.hop);
  const std::size_t hi = audio.size() - cfg.hop;
  AudioBuffer ref(std::vector<double>(clean.samples.begin() + lo,
                                      clean.samples.begin() + hi),
                  clean.sample_rate);
  AudioBuffer cut(std::vector<double>(audio.samples.begin() + lo,
                                      audio.samples.begin() + hi),
                  audio.sample_rate);
  return si_sdr(ref, cut);
}

}  // namespace oracle_detail

inline OracleReport oracle_sweep(const AudioBuffer& clean, const AudioBuffer& noise,
                                 const std::vector<double>& snrs,
                                 const StftConfig& cfg = {}) {
  if (snrs.empty()) throw InvalidConfigError("oracle_sweep needs at least one SNR");
  const std::size_t len = std::min(clean.size(), noise.size());
  AudioBuffer s(std::vector<double>(clean.samples.begin(),
                                    clean.samples.begin() + len),
                clean.sample_rate);
  AudioBuffer n(std::vector<double>(noise.samples.begin(),
                                    noise.samples.begin() + len),
                noise.sample_rate);
  if (signal_power(n.samples) <= 0.0)
    throw InvalidInputError("oracle_sweep needs nonzero-power noise");
  if (signal_power(s.samples) <= 0.0)
    throw InvalidInputError("oracle_sweep needs nonzero-power speech");

  const MelFilterBank fb = build_mel_filterbank(64, cfg.n_bins_used, s.sample_rate);
  const ComplexSpectrogram spec_s = stft(s, cfg);

  OracleReport report;
  for (double snr : snrs) {
    const AudioBuffer mixture = mix_at_snr(s, n, snr);
    const ComplexSpectrogram spec_x = stft(mixture, cfg);

    const Tensor<double> mag_s = magnitudes(spec_s, cfg.n_bins_used);
    const Tensor<double> mag_x = magnitudes(spec_x, cfg.n_bins_used);

    const GainTensor g_lin = oracle_gains(mag_s, mag_x, GainScale::kLinear);
    const GainTensor g_mel = oracle_gains(to_mel(mag_s, fb), to_mel(mag_x, fb),
                                          GainScale::kMel);

    OracleReport::Row row;
    row.snr_db = snr;
    row.sisdr_oracle_linear =
        oracle_detail::sisdr_resynth(s, apply_gain_mask(spec_x, g_lin), cfg);
    row.sisdr_oracle_mel = oracle_detail::sisdr_resynth(
        s, apply_gain_mask(spec_x, interpolate_gains(g_mel, fb)), cfg);
    row.sisdr_mag_noisy_phase = oracle_detail::sisdr_resynth(
        s, ideal_mag_noisy_phase(spec_s, spec_x), cfg);
    row.sisdr_closest_noisy_phase = oracle_detail::sisdr_resynth(
        s, closest_noisy_phase(spec_s, spec_x), cfg);
    report.rows.push_back(row);
  }
  return report;
}

inline void write_oracle_csv(const OracleReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "snr_db,oracle_linear,oracle_mel,mag_noisy_phase,closest_noisy_phase\n";
  char line[160];
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%.2f,%.2f,%.2f,%.2f,%.2f\n", r.snr_db,
                  r.sisdr_oracle_linear, r.sisdr_oracle_mel, r.sisdr_mag_noisy_phase,
                  r.sisdr_closest_noisy_phase);
    out << line;
  }
}

}  // namespace melmask2
