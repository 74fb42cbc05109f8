#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mgaa/audio.hpp"
#include "mgaa/common.hpp"

namespace mgaa {

enum class CodecId {
  AMRWB,
  EVS,
  IVAS,
  OPUS,
  SPEEX_WB,
  SILK,
  MULAW_STANDIN,
  IDENTITY,
};

inline const char* codec_name(CodecId id) {
  switch (id) {
    case CodecId::AMRWB: return "amrwb";
    case CodecId::EVS: return "evs";
    case CodecId::IVAS: return "ivas";
    case CodecId::OPUS: return "opus";
    case CodecId::SPEEX_WB: return "speex_wb";
    case CodecId::SILK: return "silk";
    case CodecId::MULAW_STANDIN: return "mulaw_standin";
    case CodecId::IDENTITY: return "identity";
  }
  return "?";
}

inline CodecId codec_from_name(const std::string& s) {
  for (CodecId id : {CodecId::AMRWB, CodecId::EVS, CodecId::IVAS, CodecId::OPUS,
                     CodecId::SPEEX_WB, CodecId::SILK, CodecId::MULAW_STANDIN,
                     CodecId::IDENTITY})
    if (s == codec_name(id)) return id;
  fail("unknown codec '", s, "'");
}

inline bool codec_is_builtin(CodecId id) {
  return id == CodecId::MULAW_STANDIN || id == CodecId::IDENTITY;
}

// The six paper-protocol codecs run at 24.40 kbps except AMR-WB, whose top
// mode is 23.85.
inline double default_bitrate(CodecId id) {
  return id == CodecId::AMRWB ? 23.85 : 24.40;
}

enum class LossModel { Bernoulli, GilbertElliott };

// One cell of the degradation matrix: codec plus packet-loss behaviour.
struct DegradationSpec {
  CodecId codec = CodecId::IDENTITY;
  double bitrate_kbps = 24.40;
  double plr = 0.0;
  LossModel loss_model = LossModel::Bernoulli;
  double ge_p_good_to_bad = 0.0;
  double ge_p_bad_to_good = 1.0;
  int frame_ms = 20;
  uint64_t seed = 0;

  void validate() const {
    require(plr >= 0.0 && plr <= 1.0, "packet loss rate must be in [0,1], got ", plr);
    require(frame_ms > 0, "frame_ms must be positive");
    if (loss_model == LossModel::GilbertElliott) {
      require(ge_p_good_to_bad >= 0 && ge_p_good_to_bad <= 1 && ge_p_bad_to_good > 0 &&
                  ge_p_bad_to_good <= 1,
              "bad Gilbert-Elliott transition probabilities");
    }
  }

  DegradationSpec with_seed(uint64_t s) const {
    DegradationSpec out = *this;
    out.seed = s;
    return out;
  }
};

// Parameterizes the two-state chain so its stationary loss rate
// p_gb / (p_gb + p_bg) equals `plr`, with the given mean burst length in
// frames (the mean sojourn time of the bad state, 1 / p_bg).
inline DegradationSpec gilbert_elliott_for(double plr, double mean_burst_frames = 3.0,
                                           CodecId codec = CodecId::IDENTITY) {
  require(plr >= 0.0 && plr < 1.0, "Gilbert-Elliott target rate must be in [0,1)");
  require(mean_burst_frames >= 1.0, "mean burst length must be >= 1 frame");
  DegradationSpec spec;
  spec.codec = codec;
  spec.loss_model = LossModel::GilbertElliott;
  spec.plr = plr;
  spec.ge_p_bad_to_good = 1.0 / mean_burst_frames;
  spec.ge_p_good_to_bad = plr * spec.ge_p_bad_to_good / (1.0 - plr);
  require(spec.ge_p_good_to_bad <= 1.0, "target rate ", plr,
          " not reachable with burst length ", mean_burst_frames);
  return spec;
}

// Draws the per-frame drop pattern. The pattern depends only on the spec and
// seed, never on the audio content.
inline std::vector<bool> draw_loss_pattern(int n_frames, const DegradationSpec& spec) {
  spec.validate();
  std::vector<bool> drop(size_t(n_frames), false);
  Rng rng(mix64(spec.seed ^ 0x706c6f7373ull));
  if (spec.loss_model == LossModel::Bernoulli) {
    for (int i = 0; i < n_frames; ++i) drop[size_t(i)] = rng.uniform() < spec.plr;
  } else {
    // start state from the stationary distribution
    const double p_bad = spec.ge_p_good_to_bad /
                         (spec.ge_p_good_to_bad + spec.ge_p_bad_to_good);
    bool bad = rng.uniform() < p_bad;
    for (int i = 0; i < n_frames; ++i) {
      drop[size_t(i)] = bad;
      const double u = rng.uniform();
      bad = bad ? (u >= spec.ge_p_bad_to_good) : (u < spec.ge_p_good_to_bad);
    }
  }
  return drop;
}

// Frame-based packet loss: dropped 20 ms frames are zero-filled (concealment
// by silence), length is preserved.
inline AudioSegment packet_loss(const AudioSegment& seg, const DegradationSpec& spec) {
  const int frame = spec.frame_ms * AudioSegment::kSampleRate / 1000;
  const int n_frames = (AudioSegment::kLength + frame - 1) / frame;
  const auto drop = draw_loss_pattern(n_frames, spec);
  AudioSegment out = seg;
  for (int i = 0; i < n_frames; ++i) {
    if (!drop[size_t(i)]) continue;
    const int lo = i * frame;
    const int hi = std::min(AudioSegment::kLength, lo + frame);
    std::fill(out.samples.begin() + lo, out.samples.begin() + hi, 0.0f);
  }
  return out;
}

// ---- built-in mu-law stand-in codec ----

// 8-bit style mu-law companding with a symmetric midtread quantizer, so zero
// maps to zero exactly. Round-trip SNR on a full-scale sine is about 38 dB.
inline float mulaw_roundtrip_sample(float x) {
  static constexpr double kMu = 255.0;
  const double cl = std::max(-1.0, std::min(1.0, double(x)));
  const double y = (cl < 0 ? -1.0 : 1.0) * std::log1p(kMu * std::abs(cl)) /
                   std::log1p(kMu);
  const int q = int(std::lround(y * 127.0));
  const double yd = double(q) / 127.0;
  return float((yd < 0 ? -1.0 : 1.0) * (std::pow(1.0 + kMu, std::abs(yd)) - 1.0) / kMu);
}

inline AudioSegment mulaw_standin(const AudioSegment& seg) {
  AudioSegment out = seg;
  for (float& x : out.samples) x = mulaw_roundtrip_sample(x);
  return out;
}

// ---- external codec adapters ----

// Encode/decode command templates per codec. Expected placeholders: {in},
// {out} and optionally {bitrate} (kbps).
struct CodecManifest {
  struct Entry {
    std::string encode_cmd;
    std::string decode_cmd;
    std::string ext;  // intermediate bitstream extension
    int sample_rate = 16000;
  };

  std::map<CodecId, Entry> entries;

  bool has(CodecId id) const { return entries.count(id) > 0; }

  // `codec_id | encode_cmd | decode_cmd | ext | rate`, one codec per line.
  static CodecManifest parse(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open codec manifest: ", path.string());
    CodecManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      bool blank = true;
      for (char c : line)
        if (!std::isspace((unsigned char)c)) blank = false;
      if (blank) continue;
      std::vector<std::string> cols;
      std::string cur;
      for (char c : line) {
        if (c == '|') {
          cols.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      cols.push_back(cur);
      require(cols.size() == 5, path.string(), " line ", lineno,
              ": want 'codec | encode | decode | ext | rate'");
      auto strip = [](std::string s) {
        const size_t a = s.find_first_not_of(" \t");
        const size_t b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      Entry e;
      const CodecId id = codec_from_name(strip(cols[0]));
      e.encode_cmd = strip(cols[1]);
      e.decode_cmd = strip(cols[2]);
      e.ext = strip(cols[3]);
      try {
        e.sample_rate = std::stoi(strip(cols[4]));
      } catch (...) {
        fail(path.string(), " line ", lineno, ": bad sample rate");
      }
      require(e.encode_cmd.find("{in}") != std::string::npos &&
                  e.encode_cmd.find("{out}") != std::string::npos,
              path.string(), " line ", lineno, ": encode command needs {in} and {out}");
      require(e.decode_cmd.find("{in}") != std::string::npos &&
                  e.decode_cmd.find("{out}") != std::string::npos,
              path.string(), " line ", lineno, ": decode command needs {in} and {out}");
      m.entries[id] = e;
    }
    return m;
  }

  // Checks that each referenced executable resolves (absolute path or PATH).
  void validate() const {
    for (const auto& [id, e] : entries) {
      for (const std::string& cmd : {e.encode_cmd, e.decode_cmd}) {
        const std::string exe = cmd.substr(0, cmd.find(' '));
        require(executable_resolves(exe), "codec ", codec_name(id), ": executable '",
                exe, "' not found");
      }
    }
  }

  static bool executable_resolves(const std::string& exe) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (exe.find('/') != std::string::npos) return fs::exists(exe, ec);
    const char* path_env = std::getenv("PATH");
    if (!path_env) return false;
    std::istringstream ss(path_env);
    std::string dir;
    while (std::getline(ss, dir, ':'))
      if (!dir.empty() && fs::exists(fs::path(dir) / exe, ec)) return true;
    return false;
  }
};

namespace degrade_detail {

inline std::string substitute(std::string tmpl, const std::string& key,
                              const std::string& value) {
  size_t pos;
  while ((pos = tmpl.find(key)) != std::string::npos)
    tmpl.replace(pos, key.size(), value);
  return tmpl;
}

// Scratch directory for codec intermediates: $MGAA_SCRATCH if set, else the
// system temp dir. Each invocation gets a unique subdirectory, removed on
// scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(uint64_t tag) {
    namespace fs = std::filesystem;
    const char* env = std::getenv("MGAA_SCRATCH");
    fs::path base = env && *env ? fs::path(env) : fs::temp_directory_path();
    static std::atomic<uint64_t> counter{0};
    dir_ = base / cat("mgaa-", ::getpid(), "-", tag, "-", counter.fetch_add(1));
    fs::create_directories(dir_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline void run_command(const std::string& cmd, const std::filesystem::path& stderr_file) {
  const std::string full = cat(cmd, " 2> ", stderr_file.string());
  const int rc = std::system(full.c_str());
  if (rc == 0) return;
  const int status = (rc != -1 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : rc;
  std::string err;
  std::ifstream es(stderr_file);
  if (es.good()) {
    std::stringstream ss;
    ss << es.rdbuf();
    err = ss.str();
    if (err.size() > 2000) err = err.substr(0, 2000) + "...";
  }
  fail("codec command failed (exit status ", status, "): ", cmd,
       err.empty() ? "" : cat("\nstderr: ", err));
}

}  // namespace degrade_detail

// Encode then decode through the configured codec. External codecs go through
// their command templates with on-disk intermediates; the output is trimmed
// or zero-padded back to the fixed segment length to absorb codec delay.
inline AudioSegment codec_roundtrip(const AudioSegment& seg, const DegradationSpec& spec,
                                    const CodecManifest* manifest = nullptr) {
  spec.validate();
  switch (spec.codec) {
    case CodecId::IDENTITY:
      return seg;
    case CodecId::MULAW_STANDIN:
      return mulaw_standin(seg);
    default:
      break;
  }
  require(manifest != nullptr && manifest->has(spec.codec),
          "no codec manifest entry for ", codec_name(spec.codec));
  const auto& e = manifest->entries.at(spec.codec);

  degrade_detail::ScratchDir scratch(mix64(spec.seed ^ uint64_t(spec.codec)));
  const auto in_wav = scratch.path() / "in.wav";
  const auto bitstream = scratch.path() / cat("mid.", e.ext);
  const auto out_wav = scratch.path() / "out.wav";
  const auto err_file = scratch.path() / "stderr.txt";
  write_wav_mono16k(in_wav, seg.samples);

  auto fill = [&](const std::string& tmpl, const std::string& in, const std::string& out) {
    using degrade_detail::substitute;
    std::string cmd = substitute(tmpl, "{in}", in);
    cmd = substitute(cmd, "{out}", out);
    cmd = substitute(cmd, "{bitrate}", cat(spec.bitrate_kbps));
    return cmd;
  };
  degrade_detail::run_command(fill(e.encode_cmd, in_wav.string(), bitstream.string()),
                              err_file);
  degrade_detail::run_command(fill(e.decode_cmd, bitstream.string(), out_wav.string()),
                              err_file);

  require(e.sample_rate == AudioSegment::kSampleRate, "codec ", codec_name(spec.codec),
          ": manifest sample rate ", e.sample_rate, " is not ", AudioSegment::kSampleRate);
  std::vector<float> decoded = read_wav_mono16k(out_wav);
  decoded.resize(AudioSegment::kLength, 0.0f);  // pad or trim to absorb codec delay
  return AudioSegment(std::move(decoded));
}

// Full degradation: codec compression first, then packet loss in the sample
// domain. Deterministic for a fixed seed with built-in codecs.
inline AudioSegment degrade(const AudioSegment& seg, const DegradationSpec& spec,
                            const CodecManifest* manifest = nullptr) {
  return packet_loss(codec_roundtrip(seg, spec, manifest), spec);
}

}  // namespace mgaa
