#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "melmask2/wav.hpp"

using namespace melmask2;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("melmask2_" + name);
}

AudioBuffer float_precision_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.9, 0.9);
  std::vector<double> s(n);
  for (double& v : s) v = static_cast<double>(static_cast<float>(dist(rng)));
  return AudioBuffer(std::move(s), kEngineSampleRate);
}

}  // namespace

TEST_CASE("float32 write/read round trip is exact") {
  const auto path = temp_file("roundtrip.wav");
  const AudioBuffer x = float_precision_noise(5000, 42);
  wav_write(path.string(), x);
  const AudioBuffer y = wav_read(path.string());
  REQUIRE(y.size() == x.size());
  CHECK(y.sample_rate == kEngineSampleRate);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y.samples[i] == x.samples[i]);
  fs::remove(path);
}

TEST_CASE("pcm16 scaling convention") {
  const auto path = temp_file("pcm16.wav");
  {
    std::ofstream out(path, std::ios::binary);
    auto u16 = [&](std::uint16_t v) { out.put(static_cast<char>(v & 0xFF)); out.put(static_cast<char>(v >> 8)); };
    auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF)); };
    out.write("RIFF", 4); u32(36 + 4); out.write("WAVE", 4);
    out.write("fmt ", 4); u32(16); u16(1); u16(1); u32(32000); u32(64000); u16(2); u16(16);
    out.write("data", 4); u32(4);
    u16(0x8000);  // -32768
    u16(0x4000);  // 16384
  }
  const AudioBuffer y = wav_read(path.string());
  REQUIRE(y.size() == 2);
  CHECK(y.samples[0] == -1.0);
  CHECK(y.samples[1] == 0.5);
  fs::remove(path);
}

TEST_CASE("non-engine sample rate is rejected") {
  const auto path = temp_file("rate.wav");
  AudioBuffer x = float_precision_noise(100, 7);
  x.sample_rate = 16000;
  wav_write(path.string(), x);
  CHECK_THROWS_AS(wav_read(path.string()), FormatError);
  fs::remove(path);
}

TEST_CASE("malformed and truncated files raise parse errors") {
  const auto path = temp_file("bad.wav");
  {
    std::ofstream out(path, std::ios::binary);
    out.write("JUNKJUNKJUNK", 12);
  }
  CHECK_THROWS_AS(wav_read(path.string()), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    out.write("RIFF", 4);
  }
  CHECK_THROWS_AS(wav_read(path.string()), FormatError);
  CHECK_THROWS_AS(wav_read("/nonexistent/melmask2.wav"), FormatError);
  fs::remove(path);
}

TEST_CASE("first channel of a stereo file is taken") {
  const auto path = temp_file("stereo.wav");
  {
    std::ofstream out(path, std::ios::binary);
    auto u16 = [&](std::uint16_t v) { out.put(static_cast<char>(v & 0xFF)); out.put(static_cast<char>(v >> 8)); };
    auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF)); };
    out.write("RIFF", 4); u32(36 + 8); out.write("WAVE", 4);
    out.write("fmt ", 4); u32(16); u16(1); u16(2); u32(32000); u32(128000); u16(4); u16(16);
    out.write("data", 4); u32(8);
    u16(0x4000); u16(0x0000);  // frame 0: L=0.5, R=0
    u16(0x2000); u16(0x0000);  // frame 1: L=0.25, R=0
  }
  const AudioBuffer y = wav_read(path.string());
  REQUIRE(y.size() == 2);
  CHECK(y.samples[0] == Catch::Approx(0.5));
  CHECK(y.samples[1] == Catch::Approx(0.25));
  fs::remove(path);
}
