#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "melmask2/dataset.hpp"
#include "melmask2/pipeline.hpp"

using namespace melmask2;
namespace fs = std::filesystem;

namespace {

AudioBuffer random_audio(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  std::vector<double> s(n);
  for (double& v : s) v = dist(rng);
  return AudioBuffer(std::move(s), kEngineSampleRate);
}

std::vector<double> stream_through(Enhancer& enh, const AudioBuffer& in) {
  enh.reset();
  const int hop = enh.config().stft.hop;
  std::vector<double> out;
  std::vector<double> chunk(static_cast<std::size_t>(hop), 0.0);
  std::size_t pos = 0;
  while (pos + hop <= in.size()) {
    std::copy(in.samples.begin() + pos, in.samples.begin() + pos + hop,
              chunk.begin());
    const auto y = enh.enhance_frame(chunk);
    out.insert(out.end(), y.begin(), y.end());
    pos += hop;
  }
  std::fill(chunk.begin(), chunk.end(), 0.0);
  const auto tail = enh.enhance_frame(chunk);
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace

TEST_CASE("sin post-filter closed forms and contraction") {
  CHECK(sin_postfilter_value(0.0) == 0.0);
  CHECK(sin_postfilter_value(1.0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(sin_postfilter_value(0.5) == Catch::Approx(0.353553).margin(1e-6));
  for (int i = 0; i <= 1000; ++i) {
    const double g = i / 1000.0;
    const double pf = sin_postfilter_value(g);
    CHECK(pf <= g + 1e-12);
    CHECK(pf >= 0.0);
    if (g > 0.0 && g < 1.0) CHECK(pf < g);
  }

  GainTensor g;
  g.scale = GainScale::kLinear;
  g.values = Tensor<double>({1, 4});
  g.values[0] = 0.0;
  g.values[1] = 0.5;
  g.values[2] = 1.0;
  g.values[3] = 0.25;
  const GainTensor out = sin_postfilter(g);
  CHECK(out.values[0] == 0.0);
  CHECK(out.values[2] == Catch::Approx(1.0).margin(1e-12));

  g.values[3] = 1.5;
  CHECK_THROWS_AS(sin_postfilter(g), InvalidInputError);
}

TEST_CASE("identity path: unity gains reproduce the input") {
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kStage1Only;
  cfg.postfilter = false;
  cfg.force_unity_gains = true;
  Enhancer enh(cfg, ModelGraph<float>{}, ModelGraph<float>{});

  const AudioBuffer x = random_audio(16000, 71);
  const std::vector<double> y = stream_through(enh, x);

  double num = 0.0, den = 0.0;
  for (std::size_t i = cfg.stft.hop; i + cfg.stft.window_len < x.size(); ++i) {
    const double d = y[i] - x.samples[i];
    num += d * d;
    den += x.samples[i] * x.samples[i];
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("zero input produces zero output") {
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kStage1Only;
  Enhancer enh(cfg, build_stage1<float>(3), ModelGraph<float>{});
  const AudioBuffer x(std::vector<double>(8000, 0.0), kEngineSampleRate);
  for (double v : stream_through(enh, x)) CHECK(v == 0.0);
}

TEST_CASE("chunk size is validated") {
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kStage1Only;
  cfg.force_unity_gains = true;
  Enhancer enh(cfg, ModelGraph<float>{}, ModelGraph<float>{});
  std::vector<double> wrong(100, 0.0);
  CHECK_THROWS_AS(enh.enhance_frame(wrong), InvalidInputError);
}

TEST_CASE("streaming equals the batch path") {
  const ToyDataset ds = synth_toy_dataset(1, 1.0, 73);
  const AudioBuffer mix = mix_at_snr(ds.clean[0], ds.noise[0], 0.0);

  for (const auto mode : {PipelineMode::kStage1Only, PipelineMode::kTwoStage,
                          PipelineMode::kStage2OnlyComplex}) {
    PipelineConfig cfg;
    cfg.mode = mode;
    cfg.postfilter = mode == PipelineMode::kStage1Only;
    Enhancer enh(cfg, build_stage1<float>(5), build_stage2<float>(5));

    const AudioBuffer batch = enh.enhance_offline(mix);
    const std::vector<double> streamed = stream_through(enh, mix);

    double max_diff = 0.0;
    const std::size_t n = std::min(batch.size(), streamed.size());
    for (std::size_t i = 0; i < n; ++i)
      max_diff = std::max(max_diff, std::abs(batch.samples[i] - streamed[i]));
    INFO("mode " << mode_name(mode));
    CHECK(max_diff < 1e-5);
  }
}

TEST_CASE("end-to-end causality") {
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kTwoStage;
  Enhancer enh(cfg, build_stage1<float>(7), build_stage2<float>(7));

  const AudioBuffer a = random_audio(12800, 77);
  AudioBuffer b = a;
  // Diverge from sample 6400 on.
  for (std::size_t i = 6400; i < b.size(); ++i) b.samples[i] = -b.samples[i] + 0.05;

  const int hop = cfg.stft.hop;
  enh.reset();
  std::vector<double> ya, yb;
  {
    std::vector<double> chunk(static_cast<std::size_t>(hop));
    for (std::size_t pos = 0; pos + hop <= a.size(); pos += hop) {
      std::copy(a.samples.begin() + pos, a.samples.begin() + pos + hop, chunk.begin());
      const auto y = enh.enhance_frame(chunk);
      ya.insert(ya.end(), y.begin(), y.end());
    }
  }
  enh.reset();
  {
    std::vector<double> chunk(static_cast<std::size_t>(hop));
    for (std::size_t pos = 0; pos + hop <= b.size(); pos += hop) {
      std::copy(b.samples.begin() + pos, b.samples.begin() + pos + hop, chunk.begin());
      const auto y = enh.enhance_frame(chunk);
      yb.insert(yb.end(), y.begin(), y.end());
    }
  }
  // Outputs emitted before the divergence point are identical.
  for (std::size_t i = 0; i < 6400 - hop; ++i) REQUIRE(ya[i] == yb[i]);
  bool changed = false;
  for (std::size_t i = 6400; i < ya.size(); ++i) changed = changed || ya[i] != yb[i];
  CHECK(changed);
}

TEST_CASE("enhance_file length contract and rtf") {
  const auto in_path = fs::temp_directory_path() / "melmask2_in.wav";
  const auto out_path = fs::temp_directory_path() / "melmask2_out.wav";
  const ToyDataset ds = synth_toy_dataset(1, 1.0, 79);
  wav_write(in_path.string(), mix_at_snr(ds.clean[0], ds.noise[0], 5.0));

  PipelineConfig cfg;
  cfg.mode = PipelineMode::kStage1Only;
  Enhancer enh(cfg, build_stage1<float>(9), ModelGraph<float>{});
  const EnhanceSummary s = enhance_file(in_path.string(), out_path.string(), enh);
  CHECK(s.frames == 100);  // 1 s / 10 ms
  CHECK(s.rtf > 0.0);

  const AudioBuffer out = wav_read(out_path.string());
  CHECK(out.size() == 32000);
  fs::remove(in_path);
  fs::remove(out_path);
}

TEST_CASE("rtf report fields") {
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kStage1Only;
  Enhancer enh(cfg, build_stage1<float>(11), ModelGraph<float>{});
  const RtfReport r = bench_rtf(enh, 0.5, 1);
  CHECK(r.frames > 0);
  CHECK(r.mean_frame_ms > 0.0);
  CHECK(r.p95_frame_ms >= r.mean_frame_ms * 0.5);
  CHECK(r.frame_budget_ms == Catch::Approx(10.0));
  CHECK(r.rtf > 0.0);
  CHECK(r.to_text().find("rtf=") != std::string::npos);
  CHECK(r.to_text().find("budget") != std::string::npos);
}

TEST_CASE("missing weight paths are rejected") {
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kTwoStage;
  CHECK_THROWS_AS(Enhancer{cfg}, InvalidConfigError);
}
