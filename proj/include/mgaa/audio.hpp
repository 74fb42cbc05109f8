#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mgaa/common.hpp"

namespace mgaa {

// Fixed-length mono waveform, the unit of all processing. Four seconds at
// 16 kHz, samples in [-1, 1] as floats.
struct AudioSegment {
  static constexpr int kSampleRate = 16000;
  static constexpr int kLength = 64000;

  std::vector<float> samples;

  AudioSegment() : samples(kLength, 0.0f) {}
  explicit AudioSegment(std::vector<float> s) : samples(std::move(s)) {
    require(int(samples.size()) == kLength, "AudioSegment needs exactly ", kLength,
            " samples, got ", samples.size());
  }

  bool all_finite() const {
    for (float x : samples)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Shorter inputs are cyclically repeated then trimmed; longer inputs keep the
// first four seconds. Repetition keeps the spectral statistics of the clip.
inline AudioSegment condition_segment(const std::vector<float>& raw) {
  require(!raw.empty(), "cannot condition an empty waveform");
  std::vector<float> out(AudioSegment::kLength);
  for (int i = 0; i < AudioSegment::kLength; ++i) out[i] = raw[i % raw.size()];
  return AudioSegment(std::move(out));
}

namespace wav_detail {

inline uint32_t rd_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
inline uint16_t rd_u16(const unsigned char* p) {
  return uint16_t(p[0] | p[1] << 8);
}

}  // namespace wav_detail

// Reads a RIFF WAV file; only mono 16 kHz 16-bit PCM is accepted, anything
// else is rejected with a message naming the offending field.
inline std::vector<float> read_wav_mono16k(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open WAV file: ", path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  using namespace wav_detail;
  require(raw.size() >= 44, path.string(), ": too short to be a WAV file");
  require(std::memcmp(raw.data(), "RIFF", 4) == 0, path.string(), ": missing RIFF header");
  require(std::memcmp(raw.data() + 8, "WAVE", 4) == 0, path.string(), ": not a WAVE file");

  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;

  size_t off = 12;
  while (off + 8 <= raw.size()) {
    const char* id = reinterpret_cast<const char*>(raw.data() + off);
    const uint32_t len = rd_u32(raw.data() + off + 4);
    const size_t body = off + 8;
    if (body + len > raw.size()) fail(path.string(), ": truncated chunk '",
                                      std::string(id, 4), "'");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      require(len >= 16, path.string(), ": fmt chunk too small");
      format = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      rate = rd_u32(raw.data() + body + 4);
      bits = rd_u16(raw.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    off = body + len + (len & 1);  // chunks are word-aligned
  }

  require(have_fmt, path.string(), ": no fmt chunk");
  require(data_off != 0, path.string(), ": no data chunk");
  require(format == 1, path.string(), ": unsupported format tag ", format,
          " (want PCM=1)");
  require(channels == 1, path.string(), ": unsupported channel count ", channels,
          " (want mono)");
  require(rate == AudioSegment::kSampleRate, path.string(), ": unsupported sample rate ",
          rate, " (want ", AudioSegment::kSampleRate, ")");
  require(bits == 16, path.string(), ": unsupported bit depth ", bits, " (want 16)");
  require(data_len >= 2, path.string(), ": empty data chunk");

  const size_t n = data_len / 2;
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    const int16_t s = int16_t(rd_u16(raw.data() + data_off + 2 * i));
    out[i] = float(s) / 32768.0f;
  }
  return out;
}

inline void write_wav_mono16k(const std::filesystem::path& path,
                              const std::vector<float>& samples) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot create WAV file: ", path.string());
  const uint32_t data_len = uint32_t(samples.size() * 2);
  const uint32_t rate = AudioSegment::kSampleRate;
  write_bytes(os, "RIFF", 4);
  write_le<uint32_t>(os, 36 + data_len);
  write_bytes(os, "WAVE", 4);
  write_bytes(os, "fmt ", 4);
  write_le<uint32_t>(os, 16);
  write_le<uint16_t>(os, 1);  // PCM
  write_le<uint16_t>(os, 1);  // mono
  write_le<uint32_t>(os, rate);
  write_le<uint32_t>(os, rate * 2);
  write_le<uint16_t>(os, 2);
  write_le<uint16_t>(os, 16);
  write_bytes(os, "data", 4);
  write_le<uint32_t>(os, data_len);
  for (float x : samples) {
    const float c = std::max(-1.0f, std::min(1.0f, x));
    write_le<int16_t>(os, int16_t(std::lrintf(c * 32767.0f)));
  }
  require(os.good(), "short write: ", path.string());
}

inline AudioSegment read_segment(const std::filesystem::path& path) {
  return condition_segment(read_wav_mono16k(path));
}

}  // namespace mgaa
