#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "melmask2/audio.hpp"
#include "melmask2/errors.hpp"

namespace melmask2 {

namespace wav_detail {

inline constexpr std::uint16_t kFormatPcm = 0x0001;
inline constexpr std::uint16_t kFormatFloat = 0x0003;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(std::istream& in, std::size_t& offset) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError("unexpected end of file", offset);
  offset += sizeof(T);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

inline float bits_to_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof(f));
  return f;
}

inline std::uint32_t float_to_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof(u));
  return u;
}

}  // namespace wav_detail

enum class WavSampleFormat { kFloat32, kPcm16 };

// RIFF/WAVE reader: PCM16 or IEEE float32, mono (first channel of
// multichannel files). Anything but the engine rate is rejected outright;
// there is no silent resampling.
inline AudioBuffer wav_read(const std::string& path) {
  using namespace wav_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::size_t off = 0;

  char tag[4];
  auto read_tag = [&](const char* what) {
    if (!in.read(tag, 4)) throw FormatError(std::string("truncated ") + what, off);
    off += 4;
  };
  read_tag("RIFF header");
  if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError("not a RIFF file", 0);
  read_le<std::uint32_t>(in, off);  // riff size, unused
  read_tag("WAVE header");
  if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError("not a WAVE file", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<double> samples;

  while (in.peek() != EOF) {
    read_tag("chunk header");
    char chunk_id[4];
    std::memcpy(chunk_id, tag, 4);
    const std::uint32_t chunk_size = read_le<std::uint32_t>(in, off);

    if (std::memcmp(chunk_id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("fmt chunk too small", off);
      format = read_le<std::uint16_t>(in, off);
      channels = read_le<std::uint16_t>(in, off);
      rate = read_le<std::uint32_t>(in, off);
      read_le<std::uint32_t>(in, off);  // byte rate
      read_le<std::uint16_t>(in, off);  // block align
      bits = read_le<std::uint16_t>(in, off);
      std::uint32_t consumed = 16;
      if (format == kFormatExtensible) {
        if (chunk_size < 40) throw FormatError("extensible fmt chunk too small", off);
        read_le<std::uint16_t>(in, off);  // cbSize
        read_le<std::uint16_t>(in, off);  // valid bits
        read_le<std::uint32_t>(in, off);  // channel mask
        format = read_le<std::uint16_t>(in, off);  // subformat GUID, code part
        in.seekg(14, std::ios::cur);               // rest of GUID
        off += 14;
        consumed = 40;
      }
      if (chunk_size > consumed) {
        in.seekg(chunk_size - consumed, std::ios::cur);
        off += chunk_size - consumed;
      }
      have_fmt = true;
    } else if (std::memcmp(chunk_id, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk", off);
      if (channels == 0) throw FormatError("zero channels", off);
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32)
        throw FormatError("unsupported sample format (need PCM16 or float32)", off);
      const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
      const std::size_t frame_count = chunk_size / (bytes_per_sample * channels);
      samples.reserve(frame_count);
      for (std::size_t i = 0; i < frame_count; ++i) {
        for (std::uint16_t c = 0; c < channels; ++c) {
          double v;
          if (pcm16) {
            const auto raw =
                static_cast<std::int16_t>(read_le<std::uint16_t>(in, off));
            v = raw / 32768.0;
          } else {
            v = bits_to_float(read_le<std::uint32_t>(in, off));
          }
          if (c == 0) samples.push_back(v);
        }
      }
      if (chunk_size % 2 == 1) {
        in.seekg(1, std::ios::cur);
        ++off;
      }
    } else {
      // Skip unknown chunks (LIST, fact, ...), word aligned.
      const std::uint32_t skip = chunk_size + (chunk_size % 2);
      in.seekg(skip, std::ios::cur);
      off += skip;
      if (!in) throw FormatError("truncated chunk", off);
    }
  }

  if (!have_fmt || samples.empty())
    throw FormatError("no audio data found in " + path);
  if (rate != kEngineSampleRate)
    throw FormatError("unsupported sample rate " + std::to_string(rate) +
                      " Hz (engine runs at 32000 Hz, no resampling)");
  return AudioBuffer(std::move(samples), static_cast<int>(rate));
}

inline void wav_write(const std::string& path, const AudioBuffer& audio,
                      WavSampleFormat fmt = WavSampleFormat::kFloat32) {
  using namespace wav_detail;
  audio.check_finite();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");

  const bool f32 = fmt == WavSampleFormat::kFloat32;
  const std::uint16_t bits = f32 ? 32 : 16;
  const std::uint32_t byte_count =
      static_cast<std::uint32_t>(audio.size() * (bits / 8));

  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + byte_count);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, f32 ? kFormatFloat : kFormatPcm);
  write_le<std::uint16_t>(out, 1);  // mono
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(audio.sample_rate));
  write_le<std::uint32_t>(out,
                          static_cast<std::uint32_t>(audio.sample_rate * (bits / 8)));
  write_le<std::uint16_t>(out, bits / 8);
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, byte_count);

  for (double v : audio.samples) {
    if (f32) {
      write_le<std::uint32_t>(out, float_to_bits(static_cast<float>(v)));
    } else {
      double clamped = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
      auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
      write_le<std::uint16_t>(out, static_cast<std::uint16_t>(q));
    }
  }
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace melmask2
