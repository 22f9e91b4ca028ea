// melmask2 command-line frontend: mixing, enhancement, oracle sweeps, toy
// training, evaluation, benchmarking, and gradient checks.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "melmask2/gradcheck_suite.hpp"
#include "melmask2/melmask2.hpp"

namespace {

using namespace melmask2;

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    double start = 0, stop = 0, step = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 ||
        step <= 0)
      throw InvalidConfigError("bad SNR range, expected start:stop:step");
    for (double v = start; v <= stop + 1e-9; v += step) out.push_back(v);
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  }
  if (out.empty()) throw InvalidConfigError("empty SNR list");
  return out;
}

std::pair<std::string, std::string> parse_weights(const std::string& list,
                                                  PipelineMode mode) {
  std::vector<std::string> parts;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  switch (mode) {
    case PipelineMode::kStage1Only:
      if (parts.size() != 1)
        throw InvalidConfigError("stage1_only expects one weight file");
      return {parts[0], ""};
    case PipelineMode::kTwoStage:
      if (parts.size() != 2)
        throw InvalidConfigError("two_stage expects stage1,stage2 weight files");
      return {parts[0], parts[1]};
    case PipelineMode::kStage2OnlyComplex:
      if (parts.size() != 1)
        throw InvalidConfigError("stage2_only_complex expects one weight file");
      return {"", parts[0]};
  }
  throw InvalidConfigError("bad mode");
}

struct CliArgs {
  // mix
  std::string speech, noise, out, in;
  double snr = 0.0;
  // shared
  std::string mode = "two_stage";
  std::string postfilter = "off";
  std::string weights;
  std::string snrs = "-5:30:5";
  std::uint64_t seed = 1;
  // train
  std::string scheme = "all";
  std::string out_dir = ".";
  std::string stage1_loss = "L1";
  bool stage1_only = false;
  int pairs = 8;
  double duration = 2.0;
  int steps = 160;
  double lr = 1e-3;
  int batch_frames = 32;
  double p = 0.5;
  double beta = 0.5;
  // eval / bench / gradcheck
  std::string condition;
  std::string csv;
  int jobs = 1;
  double seconds = 10.0;
  int probes = 50;
};

int run_mix(const CliArgs& a) {
  const AudioBuffer speech = wav_read(a.speech);
  const AudioBuffer noise = wav_read(a.noise);
  const std::size_t n = std::min(speech.size(), noise.size());
  AudioBuffer s(std::vector<double>(speech.samples.begin(), speech.samples.begin() + n),
                speech.sample_rate);
  AudioBuffer m(std::vector<double>(noise.samples.begin(), noise.samples.begin() + n),
                noise.sample_rate);
  wav_write(a.out, mix_at_snr(s, m, a.snr));
  std::printf("wrote %s (%.1f dB mixture, %zu samples)\n", a.out.c_str(), a.snr, n);
  return 0;
}

int run_enhance(const CliArgs& a) {
  PipelineConfig cfg;
  cfg.mode = mode_from(a.mode);
  cfg.postfilter = a.postfilter == "on";
  std::tie(cfg.stage1_weights, cfg.stage2_weights) =
      parse_weights(a.weights, cfg.mode);
  Enhancer enh(cfg);
  const EnhanceSummary s = enhance_file(a.in, a.out, enh);
  std::printf("wrote %s (%d chunks, rtf %.3f)\n", a.out.c_str(), s.frames, s.rtf);
  return 0;
}

int run_oracle(const CliArgs& a) {
  const AudioBuffer speech = wav_read(a.speech);
  const AudioBuffer noise = wav_read(a.noise);
  const OracleReport report = oracle_sweep(speech, noise, parse_snr_list(a.snrs));
  write_oracle_csv(report, a.out);
  std::printf("wrote %s (%zu rows)\n", a.out.c_str(), report.rows.size());
  return 0;
}

TrainConfig train_config(const CliArgs& a) {
  TrainConfig cfg;
  cfg.seed = a.seed;
  cfg.learning_rate = a.lr;
  cfg.steps_per_phase = a.steps;
  cfg.batch_frames = a.batch_frames;
  cfg.p = a.p;
  cfg.beta = a.beta;
  cfg.validate();
  return cfg;
}

int run_train(const CliArgs& a) {
  const ToyDataset data = synth_toy_dataset(a.pairs, a.duration, a.seed);
  const TrainConfig cfg = train_config(a);
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);

  if (a.stage1_only) {
    ModelGraph<float> s1 = build_stage1<float>(cfg.seed);
    const Stage1Loss loss = a.stage1_loss == "Lg" ? Stage1Loss::kLg : Stage1Loss::kL1;
    const auto curve = train_stage1(s1, data, loss, cfg);
    save_weights(s1, (dir / "s1.bin").string());
    SchemeReport r;
    r.scheme = "stage1_" + a.stage1_loss;
    for (std::size_t i = 0; i < curve.size(); ++i)
      r.curve.push_back({r.scheme, "stage1", static_cast<int>(i), curve[i]});
    write_scheme_curve_csv(r, (dir / (r.scheme + "_curve.csv")).string());
    std::printf("trained stage1 (%s), final loss %.6f, weights at %s\n",
                a.stage1_loss.c_str(), curve.empty() ? 0.0 : curve.back(),
                (dir / "s1.bin").c_str());
    return 0;
  }

  std::vector<SchemeId> ids;
  if (a.scheme == "all") {
    for (const auto& [sid, name] : scheme_table()) ids.push_back(sid);
  } else {
    ids.push_back(scheme_from(a.scheme));
  }

  bool first = true;
  for (SchemeId id : ids) {
    const SchemeResult res = run_scheme(id, data, cfg);
    const std::string name = scheme_name(id);
    save_weights(res.stage1, (dir / (name + "_s1.bin")).string());
    save_weights(res.stage2, (dir / (name + "_s2.bin")).string());
    write_scheme_curve_csv(res.report, (dir / (name + "_curve.csv")).string());
    append_scheme_summary_csv(res.report, (dir / "summary.csv").string(), first);
    first = false;
    std::printf("%s: %d phases, toy SI-SDR %.2f -> %.2f dB\n", name.c_str(),
                res.report.phases, res.report.sisdr_in_db, res.report.sisdr_out_db);
  }
  return 0;
}

int run_eval(const CliArgs& a) {
  PipelineConfig cfg;
  cfg.mode = mode_from(a.mode);
  cfg.postfilter = a.postfilter == "on";
  std::tie(cfg.stage1_weights, cfg.stage2_weights) =
      parse_weights(a.weights, cfg.mode);
  const ModelGraph<float> s1 = cfg.stage1_weights.empty()
                                   ? ModelGraph<float>{}
                                   : load_weights<float>(cfg.stage1_weights);
  const ModelGraph<float> s2 = cfg.stage2_weights.empty()
                                   ? ModelGraph<float>{}
                                   : load_weights<float>(cfg.stage2_weights);
  const ToyDataset data = synth_toy_dataset(a.pairs, a.duration, a.seed);
  const std::string condition =
      a.condition.empty() ? a.mode + (cfg.postfilter ? "+pf" : "") : a.condition;
  const auto rows =
      evaluate(cfg, s1, s2, data, parse_snr_list(a.snrs), condition, a.jobs);
  const auto summary = summarize_eval(rows);
  write_eval_csv(summary, a.out);
  for (const auto& r : summary)
    std::printf("%s @ %+.0f dB: in %.2f -> out %.2f (+/- %.2f, n=%zu)\n",
                r.condition.c_str(), r.snr_db, r.sisdr_in_mean, r.sisdr_out_mean,
                r.ci95, r.n);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int run_bench(const CliArgs& a) {
  PipelineConfig cfg;
  cfg.mode = mode_from(a.mode);
  cfg.postfilter = a.postfilter == "on";
  std::tie(cfg.stage1_weights, cfg.stage2_weights) =
      parse_weights(a.weights, cfg.mode);
  Enhancer enh(cfg);
  const RtfReport r = bench_rtf(enh, a.seconds, a.seed);
  std::printf("%s\n", r.to_text().c_str());
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    out << "mode,frames,mean_frame_ms,p95_frame_ms,frame_budget_ms,rtf\n";
    out << a.mode << ',' << r.frames << ',' << r.mean_frame_ms << ','
        << r.p95_frame_ms << ',' << r.frame_budget_ms << ',' << r.rtf << '\n';
    std::printf("wrote %s\n", a.csv.c_str());
  }
  return 0;
}

int run_gradcheck(const CliArgs& a) {
  const auto suite = run_gradcheck_suite(a.probes, a.seed);
  bool ok = true;
  std::ostringstream os;
  for (const auto& entry : suite) {
    os << "== " << entry.name << " ==\n" << entry.report.to_text();
    ok = ok && entry.report.max_rel_err < 1e-4;
  }
  os << (ok ? "gradcheck OK (all losses < 1e-4 relative)\n"
            : "gradcheck FAILED\n");
  if (a.out.empty()) {
    std::fputs(os.str().c_str(), stdout);
  } else {
    std::ofstream f(a.out);
    f << os.str();
    std::printf("wrote %s\n", a.out.c_str());
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melmask2: streaming two-stage Mel-masking speech enhancer"};
  app.require_subcommand(1);
  CliArgs a;

  auto* mix = app.add_subcommand("mix", "Mix speech and noise at a target SNR");
  mix->add_option("--speech", a.speech, "clean speech WAV (32 kHz)")->required();
  mix->add_option("--noise", a.noise, "noise WAV (32 kHz)")->required();
  mix->add_option("--snr", a.snr, "target SNR in dB")->required()
      ->check(CLI::Range(-60.0, 60.0));
  mix->add_option("--out", a.out, "output mixture WAV")->required();

  auto* enhance = app.add_subcommand("enhance", "Enhance a noisy WAV file");
  enhance->add_option("--in", a.in, "input WAV (32 kHz)")->required();
  enhance->add_option("--out", a.out, "output WAV")->required();
  enhance->add_option("--mode", a.mode,
                      "stage1_only | two_stage | stage2_only_complex")
      ->check(CLI::IsMember({"stage1_only", "two_stage", "stage2_only_complex"}));
  enhance->add_option("--postfilter", a.postfilter, "on | off")
      ->check(CLI::IsMember({"on", "off"}));
  enhance->add_option("--weights", a.weights,
                      "comma-separated weight files in stage order")
      ->required();

  auto* oracle = app.add_subcommand("oracle", "Oracle-gain distortion sweep");
  oracle->add_option("--speech", a.speech, "clean speech WAV")->required();
  oracle->add_option("--noise", a.noise, "noise WAV")->required();
  oracle->add_option("--snrs", a.snrs, "SNR list, start:stop:step or comma list");
  oracle->add_option("--out", a.out, "output CSV")->required();

  auto* train = app.add_subcommand("train", "Toy-scale training");
  train->add_option("--scheme", a.scheme,
                    "two-stage scheme name or 'all' (Table order)");
  train->add_flag("--stage1-only", a.stage1_only, "train a single-stage Mel model");
  train->add_option("--loss", a.stage1_loss, "stage-1 loss for --stage1-only")
      ->check(CLI::IsMember({"Lg", "L1"}));
  train->add_option("--out-dir", a.out_dir, "output directory");
  train->add_option("--seed", a.seed, "RNG seed");
  train->add_option("--pairs", a.pairs, "toy dataset pairs")
      ->check(CLI::PositiveNumber);
  train->add_option("--duration", a.duration, "clip seconds")
      ->check(CLI::Range(0.5, 30.0));
  train->add_option("--steps", a.steps, "steps per phase")
      ->check(CLI::Range(0, 1000000));
  train->add_option("--lr", a.lr, "learning rate")->check(CLI::PositiveNumber);
  train->add_option("--batch-frames", a.batch_frames, "frames per step")
      ->check(CLI::PositiveNumber);
  train->add_option("--p", a.p, "gain power factor")->check(CLI::PositiveNumber);
  train->add_option("--beta", a.beta, "magnitude compression factor")
      ->check(CLI::Range(0.01, 1.0));

  auto* eval = app.add_subcommand("eval", "SNR-sweep evaluation");
  eval->add_option("--weights", a.weights, "weight files in stage order")->required();
  eval->add_option("--mode", a.mode, "pipeline mode")
      ->check(CLI::IsMember({"stage1_only", "two_stage", "stage2_only_complex"}));
  eval->add_option("--postfilter", a.postfilter, "on | off")
      ->check(CLI::IsMember({"on", "off"}));
  eval->add_option("--snrs", a.snrs, "SNR list");
  eval->add_option("--pairs", a.pairs, "toy dataset pairs")
      ->check(CLI::PositiveNumber);
  eval->add_option("--duration", a.duration, "clip seconds")
      ->check(CLI::Range(0.5, 30.0));
  eval->add_option("--seed", a.seed, "dataset seed");
  eval->add_option("--jobs", a.jobs, "parallel cells")->check(CLI::Range(1, 64));
  eval->add_option("--condition", a.condition, "label for the CSV rows");
  eval->add_option("--out", a.out, "output CSV")->required();

  auto* bench = app.add_subcommand("bench", "Real-time-factor benchmark");
  bench->add_option("--weights", a.weights, "weight files in stage order")->required();
  bench->add_option("--mode", a.mode, "pipeline mode")
      ->check(CLI::IsMember({"stage1_only", "two_stage", "stage2_only_complex"}));
  bench->add_option("--postfilter", a.postfilter, "on | off")
      ->check(CLI::IsMember({"on", "off"}));
  bench->add_option("--seconds", a.seconds, "synthetic input length")
      ->check(CLI::Range(0.5, 600.0));
  bench->add_option("--seed", a.seed, "input seed");
  bench->add_option("--csv", a.csv, "optional CSV output path");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--probes", a.probes, "probes per loss")
      ->check(CLI::Range(1, 10000));
  gradcheck->add_option("--seed", a.seed, "probe seed");
  gradcheck->add_option("--out", a.out, "optional report path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(mix)) return run_mix(a);
    if (app.got_subcommand(enhance)) return run_enhance(a);
    if (app.got_subcommand(oracle)) return run_oracle(a);
    if (app.got_subcommand(train)) return run_train(a);
    if (app.got_subcommand(eval)) return run_eval(a);
    if (app.got_subcommand(bench)) return run_bench(a);
    if (app.got_subcommand(gradcheck)) return run_gradcheck(a);
  } catch (const Error& e) {
    log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 0;
}
