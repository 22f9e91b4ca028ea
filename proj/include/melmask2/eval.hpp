#pragma once

#include <fstream>
#include <future>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "melmask2/dataset.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/metrics.hpp"
#include "melmask2/pipeline.hpp"

namespace melmask2 {

// SNR-sweep evaluation of one pipeline condition over a toy dataset.
// Embarrassingly parallel over (pair, SNR) cells; each worker owns a private
// enhancer (stream state), sharing only immutable weights.
inline std::vector<EvalRow> evaluate(const PipelineConfig& cfg,
                                     const ModelGraph<float>& stage1,
                                     const ModelGraph<float>& stage2,
                                     const ToyDataset& pairs,
                                     const std::vector<double>& snrs,
                                     const std::string& condition, int jobs = 1) {
  if (pairs.size() == 0 || snrs.empty())
    throw InvalidInputError("evaluate needs pairs and SNRs");
  if (jobs < 1) throw InvalidConfigError("jobs must be >= 1");

  struct Cell {
    std::size_t pair;
    double snr;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (double snr : snrs) cells.push_back({i, snr});

  std::vector<EvalRow> rows(cells.size());
  const int workers = std::min<int>(jobs, static_cast<int>(cells.size()));

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    Enhancer enh(cfg, stage1, stage2);
    const int hop = cfg.stft.hop;
    for (std::size_t i = lo; i < hi; ++i) {
      const Cell& c = cells[i];
      const AudioBuffer mix = mix_at_snr(pairs.clean[c.pair], pairs.noise[c.pair], c.snr);
      const AudioBuffer out = enh.enhance_offline(mix);
      auto trim = [&](const AudioBuffer& a) {
        return AudioBuffer(
            std::vector<double>(a.samples.begin() + hop, a.samples.end() - hop),
            a.sample_rate);
      };
      const AudioBuffer ref = trim(pairs.clean[c.pair]);
      EvalRow row;
      row.condition = condition;
      row.snr_db = c.snr;
      row.sisdr_in = si_sdr(ref, trim(mix));
      row.sisdr_out = si_sdr(ref, trim(out));
      rows[i] = row;
    }
  };

  if (workers <= 1) {
    run_range(0, cells.size());
  } else {
    std::vector<std::future<void>> futures;
    const std::size_t per = (cells.size() + workers - 1) / workers;
    for (int wk = 0; wk < workers; ++wk) {
      const std::size_t lo = static_cast<std::size_t>(wk) * per;
      const std::size_t hi = std::min(cells.size(), lo + per);
      if (lo >= hi) break;
      futures.push_back(std::async(std::launch::async, run_range, lo, hi));
    }
    for (auto& f : futures) f.get();
  }
  return rows;
}

struct EvalSummaryRow {
  std::string condition;
  double snr_db = 0.0;
  std::size_t n = 0;
  double sisdr_in_mean = 0.0;
  double sisdr_out_mean = 0.0;
  double ci95 = 0.0;  // on the output mean
};

inline std::vector<EvalSummaryRow> summarize_eval(const std::vector<EvalRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<const EvalRow*>> groups;
  for (const EvalRow& r : rows) groups[{r.condition, r.snr_db}].push_back(&r);

  std::vector<EvalSummaryRow> out;
  for (const auto& [key, members] : groups) {
    std::vector<double> ins, outs;
    for (const EvalRow* r : members) {
      ins.push_back(r->sisdr_in);
      outs.push_back(r->sisdr_out);
    }
    const MeanCi mi = mean_ci95(ins);
    const MeanCi mo = mean_ci95(outs);
    EvalSummaryRow s;
    s.condition = key.first;
    s.snr_db = key.second;
    s.n = mo.n;
    s.sisdr_in_mean = mi.mean;
    s.sisdr_out_mean = mo.mean;
    s.ci95 = mo.ci95;
    out.push_back(s);
  }
  return out;
}

inline void write_eval_csv(const std::vector<EvalSummaryRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "condition,snr_db,n,sisdr_in_mean,sisdr_out_mean,ci95\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.1f,%zu,%.4f,%.4f,%.4f\n",
                  r.condition.c_str(), r.snr_db, r.n, r.sisdr_in_mean,
                  r.sisdr_out_mean, r.ci95);
    out << line;
  }
}

}  // namespace melmask2
