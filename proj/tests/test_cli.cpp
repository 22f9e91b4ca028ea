#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "melmask2/dataset.hpp"
#include "melmask2/metrics.hpp"
#include "melmask2/nn.hpp"
#include "melmask2/wav.hpp"
#include "melmask2/weights_io.hpp"

using namespace melmask2;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(MELMASK2_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "melmask2_cli";
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// Shared fixture files, created on first use so tests stay order-independent.
struct Fixture {
  fs::path speech, noise, mix, s1, s2;
};

const Fixture& fixture() {
  static const Fixture fx = [] {
    Fixture f;
    const auto dir = work_dir();
    f.speech = dir / "speech.wav";
    f.noise = dir / "noise.wav";
    f.mix = dir / "mix.wav";
    f.s1 = dir / "s1.bin";
    f.s2 = dir / "s2.bin";
    const ToyDataset ds = synth_toy_dataset(1, 0.5, 901);
    wav_write(f.speech.string(), ds.clean[0]);
    wav_write(f.noise.string(), ds.noise[0]);
    wav_write(f.mix.string(), mix_at_snr(ds.clean[0], ds.noise[0], 0.0));
    save_weights(build_stage1<float>(902), f.s1.string());
    save_weights(build_stage2<float>(902), f.s2.string());
    return f;
  }();
  return fx;
}

}  // namespace

TEST_CASE("usage and parse errors exit with code 2") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("definitely-not-a-subcommand").exit_code == 2);
  CHECK(run_cli("mix --no-such-flag 1").exit_code == 2);
  CHECK(run_cli("mix --speech a.wav").exit_code == 2);  // missing required flags
  CHECK(run_cli("enhance --in x.wav --out y.wav --mode bogus --weights w.bin")
            .exit_code == 2);
}

TEST_CASE("runtime errors exit with code 1 and one diagnostic line") {
  const auto r = run_cli(
      "mix --speech /nonexistent.wav --noise /nonexistent.wav --snr 0 --out /tmp/x.wav");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("help lists every accepted flag per subcommand") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"mix", {"--speech", "--noise", "--snr", "--out"}},
      {"enhance", {"--in", "--out", "--mode", "--postfilter", "--weights"}},
      {"oracle", {"--speech", "--noise", "--snrs", "--out"}},
      {"train",
       {"--scheme", "--stage1-only", "--loss", "--out-dir", "--seed", "--pairs",
        "--duration", "--steps", "--lr", "--batch-frames", "--p", "--beta"}},
      {"eval",
       {"--weights", "--mode", "--postfilter", "--snrs", "--pairs", "--duration",
        "--seed", "--jobs", "--condition", "--out"}},
      {"bench", {"--weights", "--mode", "--postfilter", "--seconds", "--seed", "--csv"}},
      {"gradcheck", {"--probes", "--seed", "--out"}},
  };
  for (const auto& [sub, flags] : expected) {
    const auto r = run_cli(sub + " --help");
    CHECK(r.exit_code == 0);
    for (const auto& flag : flags) {
      INFO(sub << " help should list " << flag);
      CHECK(r.output.find(flag) != std::string::npos);
    }
  }
}

TEST_CASE("mix subcommand produces the requested SNR") {
  const auto dir = work_dir();
  const Fixture& fx = fixture();
  const auto mixture = dir / "mix_cli.wav";

  const auto r = run_cli("mix --speech " + fx.speech.string() + " --noise " +
                         fx.noise.string() + " --snr 0 --out " + mixture.string());
  REQUIRE(r.exit_code == 0);

  const AudioBuffer s = wav_read(fx.speech.string());
  const AudioBuffer m = wav_read(mixture.string());
  std::vector<double> added(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) added[i] = m.samples[i] - s.samples[i];
  const double achieved =
      10.0 * std::log10(signal_power(s.samples) / signal_power(added));
  CHECK(achieved == Catch::Approx(0.0).margin(1e-3));  // float32 file quantization

  // Determinism: the same command writes identical bytes.
  const auto mixture2 = dir / "mix2.wav";
  run_cli("mix --speech " + fx.speech.string() + " --noise " + fx.noise.string() +
          " --snr 0 --out " + mixture2.string());
  CHECK(file_bytes(mixture) == file_bytes(mixture2));
}

TEST_CASE("oracle subcommand writes one row per SNR") {
  const auto dir = work_dir();
  const Fixture& fx = fixture();
  const auto csv = dir / "oracle.csv";
  const auto r = run_cli("oracle --speech " + fx.speech.string() + " --noise " +
                         fx.noise.string() + " --snrs -5:30:5 --out " + csv.string());
  REQUIRE(r.exit_code == 0);
  std::ifstream in(csv);
  std::string line;
  int rows = -1;  // header
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 8);
}

TEST_CASE("enhance subcommand runs the two-stage pipeline") {
  const auto dir = work_dir();
  const Fixture& fx = fixture();

  const auto out = dir / "enhanced.wav";
  const auto r = run_cli("enhance --in " + fx.mix.string() + " --out " +
                         out.string() + " --mode two_stage --postfilter on --weights " +
                         fx.s1.string() + "," + fx.s2.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("rtf") != std::string::npos);
  const AudioBuffer y = wav_read(out.string());
  CHECK(y.size() == wav_read(fx.mix.string()).size());

  // Weight list arity is validated.
  CHECK(run_cli("enhance --in " + fx.mix.string() + " --out " + out.string() +
                " --mode two_stage --weights " + fx.s1.string())
            .exit_code == 1);
}

TEST_CASE("train subcommand is seed-reproducible") {
  const auto dir = work_dir();
  const auto out1 = dir / "t1";
  const auto out2 = dir / "t2";
  const std::string args =
      " --stage1-only --loss Lg --steps 3 --pairs 2 --duration 1 --seed 11 "
      "--batch-frames 16 --out-dir ";
  REQUIRE(run_cli("train" + args + out1.string()).exit_code == 0);
  REQUIRE(run_cli("train" + args + out2.string()).exit_code == 0);
  CHECK(file_bytes(out1 / "s1.bin") == file_bytes(out2 / "s1.bin"));
  CHECK(!file_bytes(out1 / "s1.bin").empty());
  CHECK(fs::exists(out1 / "stage1_Lg_curve.csv"));
}

TEST_CASE("train subcommand runs a named scheme") {
  const auto dir = work_dir();
  const auto out = dir / "scheme";
  const auto r = run_cli(
      "train --scheme joint --steps 2 --pairs 2 --duration 1 --seed 5 "
      "--batch-frames 16 --out-dir " +
      out.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(out / "joint_s1.bin"));
  CHECK(fs::exists(out / "joint_s2.bin"));
  CHECK(fs::exists(out / "joint_curve.csv"));
  CHECK(fs::exists(out / "summary.csv"));
  std::ifstream in(out / "summary.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "scheme,final_sisdr_db");
}

TEST_CASE("eval subcommand writes the aggregate CSV") {
  const auto dir = work_dir();
  const Fixture& fx = fixture();
  const auto csv = dir / "eval.csv";
  const auto r = run_cli("eval --weights " + fx.s1.string() +
                         " --mode stage1_only --snrs 0,10 --pairs 2 --duration 1 "
                         "--seed 3 --jobs 2 --out " +
                         csv.string());
  REQUIRE(r.exit_code == 0);
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "condition,snr_db,n,sisdr_in_mean,sisdr_out_mean,ci95");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);  // one aggregate row per SNR
}

TEST_CASE("bench subcommand reports rtf") {
  const Fixture& fx = fixture();
  const auto r = run_cli("bench --weights " + fx.s1.string() +
                         " --mode stage1_only --seconds 0.5");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("rtf=") != std::string::npos);
  CHECK(r.output.find("budget") != std::string::npos);
}

TEST_CASE("gradcheck subcommand passes") {
  const auto r = run_cli("gradcheck --probes 3 --seed 2");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("gradcheck OK") != std::string::npos);
  CHECK(r.output.find("max_rel_err") != std::string::npos);
}
