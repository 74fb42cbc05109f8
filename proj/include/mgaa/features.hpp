#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mgaa/audio.hpp"
#include "mgaa/cepstrum.hpp"
#include "mgaa/filterbank.hpp"
#include "mgaa/spectrogram.hpp"

namespace mgaa {

enum class FeatureKind : uint8_t { LFCC = 0, CQCC = 1, MFCC = 2 };

inline const char* feature_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::LFCC: return "lfcc";
    case FeatureKind::CQCC: return "cqcc";
    case FeatureKind::MFCC: return "mfcc";
  }
  return "?";
}

inline FeatureKind feature_from_name(const std::string& s) {
  if (s == "lfcc") return FeatureKind::LFCC;
  if (s == "cqcc") return FeatureKind::CQCC;
  if (s == "mfcc") return FeatureKind::MFCC;
  fail("unknown feature kind '", s, "' (want lfcc, cqcc or mfcc)");
}

// Stacked cepstral tensor [X, dX, d2X]: rows 0-19 static, 20-39 first
// derivative, 40-59 second derivative. Stored (C,F,T) row-major, C=1.
struct TFFeature {
  static constexpr int kFreq = 60;
  static constexpr int kTime = 126;
  static constexpr int kCepstra = 20;

  FeatureKind kind = FeatureKind::LFCC;
  std::vector<float> data;  // kFreq * kTime

  float& at(int f, int t) { return data[size_t(f) * kTime + t]; }
  float at(int f, int t) const { return data[size_t(f) * kTime + t]; }
};

// The feature kind fixes the transform and frequency scale:
// LFCC = (STFT, linear), MFCC = (STFT, mel), CQCC = (CQT, log-scale).
inline SpectralConfig config_for(FeatureKind kind, int n_filters = 20) {
  SpectralConfig cfg;
  cfg.n_filters = n_filters;
  switch (kind) {
    case FeatureKind::LFCC:
      cfg.transform = Transform::STFT;
      cfg.freq_scale = FreqScale::Linear;
      break;
    case FeatureKind::MFCC:
      cfg.transform = Transform::STFT;
      cfg.freq_scale = FreqScale::Mel;
      break;
    case FeatureKind::CQCC:
      cfg.transform = Transform::CQT;
      cfg.freq_scale = FreqScale::LogScale;
      break;
  }
  return cfg;
}

// Front end pipeline: spectral decomposition, filterbank projection, log,
// DCT, regression deltas. Pure function of (samples, config); a constructed
// extractor is immutable and safe to share across threads.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureKind kind, int n_filters = 20, int delta_window = 4)
      : kind_(kind),
        delta_window_(delta_window),
        cfg_(config_for(kind, n_filters)),
        plan_(cfg_),
        fb_(make_filterbank(cfg_.freq_scale, cfg_.n_filters, bin_frequencies(cfg_))) {}

  FeatureKind kind() const { return kind_; }
  const SpectralConfig& config() const { return cfg_; }
  const Filterbank& filterbank() const { return fb_; }

  TFFeature extract(const AudioSegment& seg) const {
    const Mat spec = plan_.compute(seg);
    const Mat stat = cepstra(spec, fb_, TFFeature::kCepstra, cfg_.epsilon);
    auto [d1, d2] = deltas(stat, delta_window_);
    require(stat.cols == TFFeature::kTime, "unexpected frame count ", stat.cols);

    TFFeature out;
    out.kind = kind_;
    out.data.resize(size_t(TFFeature::kFreq) * TFFeature::kTime);
    for (int j = 0; j < TFFeature::kCepstra; ++j)
      for (int n = 0; n < TFFeature::kTime; ++n) {
        out.at(j, n) = float(stat(j, n));
        out.at(j + 20, n) = float(d1(j, n));
        out.at(j + 40, n) = float(d2(j, n));
      }
    for (float v : out.data)
      require(std::isfinite(v), "non-finite feature value");
    return out;
  }

 private:
  FeatureKind kind_;
  int delta_window_;
  SpectralConfig cfg_;
  SpectrogramPlan plan_;
  Filterbank fb_;
};

// ---- flat binary record: magic, kind byte, dims, little-endian f32 ----

inline constexpr char kFeatureMagic[8] = {'M', 'G', 'A', 'A', 'T', 'F', '0', '1'};

inline void write_feature(std::ostream& os, const TFFeature& f) {
  write_bytes(os, kFeatureMagic, 8);
  write_le<uint8_t>(os, uint8_t(f.kind));
  write_le<uint32_t>(os, 1);
  write_le<uint32_t>(os, TFFeature::kFreq);
  write_le<uint32_t>(os, TFFeature::kTime);
  for (float v : f.data) write_f32(os, v);
}

inline void write_feature(const std::filesystem::path& path, const TFFeature& f) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot create feature file: ", path.string());
  write_feature(os, f);
  require(os.good(), "short write: ", path.string());
}

inline TFFeature read_feature(std::istream& is, const std::string& what = "stream") {
  char magic[8];
  read_bytes(is, magic, 8);
  require(std::memcmp(magic, kFeatureMagic, 8) == 0, what, ": bad feature magic");
  TFFeature f;
  const uint8_t kind = read_le<uint8_t>(is);
  require(kind <= 2, what, ": bad feature kind ", int(kind));
  f.kind = FeatureKind(kind);
  const uint32_t c = read_le<uint32_t>(is);
  const uint32_t fr = read_le<uint32_t>(is);
  const uint32_t t = read_le<uint32_t>(is);
  require(c == 1 && fr == TFFeature::kFreq && t == TFFeature::kTime, what,
          ": bad feature dims (", c, ",", fr, ",", t, ")");
  f.data.resize(size_t(fr) * t);
  for (float& v : f.data) v = read_f32(is);
  return f;
}

inline TFFeature read_feature(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open feature file: ", path.string());
  return read_feature(is, path.string());
}

// Cheap header check used by resumable extraction.
inline bool feature_file_valid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) return false;
  is.seekg(0, std::ios::end);
  const auto len = is.tellg();
  const std::streamoff want =
      8 + 1 + 12 + std::streamoff(TFFeature::kFreq) * TFFeature::kTime * 4;
  if (len != want) return false;
  is.seekg(0);
  char magic[8];
  is.read(magic, 8);
  return is.good() && std::memcmp(magic, kFeatureMagic, 8) == 0;
}

}  // namespace mgaa
