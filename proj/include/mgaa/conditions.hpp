#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mgaa/degrade.hpp"
#include "mgaa/eer.hpp"
#include "mgaa/embedding.hpp"
#include "mgaa/manifest.hpp"
#include "mgaa/model.hpp"
#include "mgaa/trainer.hpp"

namespace mgaa {

// Which codecs and packet loss rates make up the test matrix. The default is
// the hermetic pair; paper_protocol() selects the six real codecs (which need
// external tools via a codec manifest).
struct MatrixSpec {
  std::vector<CodecId> codecs{CodecId::IDENTITY, CodecId::MULAW_STANDIN};
  std::vector<double> plrs{0.0, 0.01, 0.05, 0.10, 0.20};
  LossModel loss_model = LossModel::Bernoulli;
  double ge_mean_burst = 3.0;

  static MatrixSpec paper_protocol() {
    MatrixSpec m;
    m.codecs = {CodecId::AMRWB, CodecId::EVS,      CodecId::IVAS,
                CodecId::OPUS,  CodecId::SPEEX_WB, CodecId::SILK};
    return m;
  }

  // C1..Cn carry the loss rates; C0 is always the clean condition.
  int n_conditions() const { return int(plrs.size()); }

  DegradationSpec cell_spec(CodecId codec, double plr) const {
    DegradationSpec s;
    if (loss_model == LossModel::GilbertElliott && plr > 0.0)
      s = gilbert_elliott_for(plr, ge_mean_burst, codec);
    s.codec = codec;
    s.plr = plr;
    s.bitrate_kbps = default_bitrate(codec);
    if (loss_model == LossModel::Bernoulli) s.loss_model = LossModel::Bernoulli;
    return s;
  }
};

struct ConditionCell {
  std::string condition;  // "C0".."C5"
  CodecId codec = CodecId::IDENTITY;
  double plr = 0.0;
  int n_real = 0;
  int n_fake = 0;
  bool skipped = false;
  std::string skip_reason;
};

struct ConditionMatrix {
  std::vector<ConditionCell> cells;  // C0 first, then C1..Cn x codecs
};

// An entry of the degraded corpus listing (cells.tsv): the corpus columns
// plus the cell coordinates.
struct DegradedEntry {
  std::filesystem::path path;
  int label = 0;
  std::string split;
  std::string condition;
  std::string codec;  // "clean" for C0
  double plr = 0.0;
};

inline constexpr const char* kCellsFileName = "cells.tsv";

inline void write_degraded_manifest(const std::filesystem::path& path,
                                    const std::vector<DegradedEntry>& entries) {
  std::ofstream os(path);
  require(os.good(), "cannot create ", path.string());
  for (const auto& e : entries)
    os << e.path.string() << "\t" << (e.label == 0 ? "real" : "fake") << "\t" << e.split
       << "\t" << e.condition << "\t" << e.codec << "\t" << e.plr << "\n";
  require(os.good(), "short write: ", path.string());
}

inline std::vector<DegradedEntry> read_degraded_manifest(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open ", path.string());
  std::vector<DegradedEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == '\t') {
        cols.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    require(cols.size() == 6, path.string(), " line ", lineno, ": want 6 columns");
    DegradedEntry e;
    e.path = cols[0];
    if (e.path.is_relative()) e.path = path.parent_path() / e.path;
    e.label = cols[1] == "fake" ? 1 : 0;
    e.split = cols[2];
    e.condition = cols[3];
    e.codec = cols[4];
    e.plr = std::stod(cols[5]);
    out.push_back(std::move(e));
  }
  return out;
}

// Builds the degraded corpus: C0 holds every utterance conditioned to 4 s but
// otherwise untouched; each cell of Ci x codec holds one degraded copy per
// utterance. Loss patterns are seeded per (cell, file), so a rerun with the
// same seed reproduces them bit for bit. Codecs whose external tools are
// missing get their cells marked skipped instead of failing the run.
inline ConditionMatrix build_conditions(const std::vector<CorpusEntry>& corpus,
                                        const MatrixSpec& matrix,
                                        const CodecManifest* manifest, uint64_t seed,
                                        const std::filesystem::path& out_dir,
                                        int jobs = 1,
                                        std::vector<DegradedEntry>* entries_out = nullptr) {
  namespace fs = std::filesystem;
  require(!corpus.empty(), "build_conditions: empty corpus");
  fs::create_directories(out_dir);

  std::vector<bool> codec_ok(matrix.codecs.size(), true);
  std::vector<std::string> codec_err(matrix.codecs.size());
  for (size_t ci = 0; ci < matrix.codecs.size(); ++ci) {
    const CodecId id = matrix.codecs[ci];
    if (codec_is_builtin(id)) continue;
    if (manifest == nullptr || !manifest->has(id)) {
      codec_ok[ci] = false;
      codec_err[ci] = "no codec manifest entry";
      continue;
    }
    const auto& e = manifest->entries.at(id);
    for (const std::string& cmd : {e.encode_cmd, e.decode_cmd}) {
      const std::string exe = cmd.substr(0, cmd.find(' '));
      if (!CodecManifest::executable_resolves(exe)) {
        codec_ok[ci] = false;
        codec_err[ci] = cat("executable '", exe, "' not found");
      }
    }
  }

  ConditionMatrix result;
  std::vector<DegradedEntry> entries;

  // C0: clean
  {
    ConditionCell cell{"C0", CodecId::IDENTITY, 0.0, 0, 0, false, ""};
    const fs::path dir = out_dir / "C0" / "clean";
    fs::create_directories(dir);
    parallel_for(int(corpus.size()), jobs, [&](int i) {
      const auto& e = corpus[size_t(i)];
      write_wav_mono16k(dir / e.path.filename(), read_segment(e.path).samples);
    });
    for (const auto& e : corpus) {
      (e.label == 0 ? cell.n_real : cell.n_fake)++;
      entries.push_back(DegradedEntry{dir / e.path.filename(), e.label, e.split, "C0",
                                      "clean", 0.0});
    }
    result.cells.push_back(cell);
  }

  for (int cond = 0; cond < matrix.n_conditions(); ++cond) {
    const double plr = matrix.plrs[size_t(cond)];
    const std::string cname = cat("C", cond + 1);
    for (size_t ci = 0; ci < matrix.codecs.size(); ++ci) {
      const CodecId codec = matrix.codecs[ci];
      ConditionCell cell{cname, codec, plr, 0, 0, false, ""};
      if (!codec_ok[ci]) {
        cell.skipped = true;
        cell.skip_reason = codec_err[ci];
        result.cells.push_back(cell);
        continue;
      }
      const fs::path dir = out_dir / cname / codec_name(codec);
      fs::create_directories(dir);
      const DegradationSpec base = matrix.cell_spec(codec, plr);
      parallel_for(int(corpus.size()), jobs, [&](int i) {
        const auto& e = corpus[size_t(i)];
        const uint64_t file_seed =
            mix64(seed ^ mix64(uint64_t(cond + 1) << 32 | uint64_t(ci)) ^
                  fnv1a64(e.path.filename().string()));
        const AudioSegment out =
            degrade(read_segment(e.path), base.with_seed(file_seed), manifest);
        write_wav_mono16k(dir / e.path.filename(), out.samples);
      });
      for (const auto& e : corpus) {
        (e.label == 0 ? cell.n_real : cell.n_fake)++;
        entries.push_back(DegradedEntry{dir / e.path.filename(), e.label, e.split, cname,
                                        codec_name(codec), plr});
      }
      result.cells.push_back(cell);
    }
  }

  write_degraded_manifest(out_dir / kCellsFileName, entries);
  if (entries_out) *entries_out = std::move(entries);
  return result;
}

// ---- evaluation over the matrix ----

struct CellReport {
  std::string condition;
  std::string codec;
  double plr = 0.0;
  int n_real = 0;
  int n_fake = 0;
  double eer = std::nan("");
  double threshold = std::nan("");
  bool skipped = false;
};

struct EvalReport {
  std::vector<CellReport> per_cell;       // one row per (condition, codec)
  std::vector<CellReport> per_condition;  // pooled scores within a condition
  double macro_avg_eer = std::nan("");    // mean over non-skipped conditions
};

// Scores a batch of feature tensors with the fake-class softmax probability.
template <typename T>
std::vector<double> score_features(Network<T>& net,
                                   const std::vector<const std::vector<float>*>& feats,
                                   int batch = 64,
                                   std::vector<std::vector<float>>* embeddings = nullptr) {
  const auto& cfg = net.config();
  std::vector<double> scores(feats.size());
  for (size_t lo = 0; lo < feats.size(); lo += size_t(batch)) {
    const size_t hi = std::min(feats.size(), lo + size_t(batch));
    Tensor<T> in(int(hi - lo), 1, cfg.in_freq, cfg.in_time);
    for (size_t i = lo; i < hi; ++i) {
      require(int(feats[i]->size()) == cfg.in_freq * cfg.in_time,
              "score: feature size mismatch");
      T* dst = &in(int(i - lo), 0, 0, 0);
      for (size_t k = 0; k < feats[i]->size(); ++k) dst[k] = T((*feats[i])[k]);
    }
    auto [logits, emb] = net.infer(in);
    for (size_t i = lo; i < hi; ++i)
      scores[i] = ops::softmax_row(logits, int(i - lo))[1];
    if (embeddings) {
      for (size_t i = lo; i < hi; ++i) {
        std::vector<float> row(size_t(emb.c()));
        for (int k = 0; k < emb.c(); ++k) row[size_t(k)] = float(emb(int(i - lo), k, 0, 0));
        embeddings->push_back(std::move(row));
      }
    }
  }
  return scores;
}

// Runs the trained model over a degraded corpus directory produced by
// build_conditions. Features are extracted on the fly with the checkpoint's
// feature kind. Scores are pooled across codecs within each condition for the
// per-condition EER; per-cell EERs are reported as well.
template <typename T>
EvalReport evaluate_conditions(Network<T>& net, FeatureKind kind,
                               const std::vector<DegradedEntry>& entries, int jobs = 1,
                               const std::filesystem::path* embed_out = nullptr) {
  require(!entries.empty(), "evaluate: empty degraded corpus");
  FeatureExtractor fx(kind);

  // extraction is the expensive part; do it once, in parallel
  std::vector<std::vector<float>> feats(entries.size());
  parallel_for(int(entries.size()), jobs, [&](int i) {
    feats[size_t(i)] = fx.extract(read_segment(entries[size_t(i)].path)).data;
  });

  struct Key {
    std::string condition, codec;
    double plr;
  };
  std::vector<Key> keys;
  std::vector<std::vector<size_t>> members;
  auto cell_of = [&](const DegradedEntry& e) -> size_t {
    for (size_t i = 0; i < keys.size(); ++i)
      if (keys[i].condition == e.condition && keys[i].codec == e.codec) return i;
    keys.push_back(Key{e.condition, e.codec, e.plr});
    members.emplace_back();
    return keys.size() - 1;
  };
  for (size_t i = 0; i < entries.size(); ++i) members[cell_of(entries[i])].push_back(i);

  EvalReport report;
  std::map<std::string, ScoreSet> pooled;
  if (embed_out) std::filesystem::create_directories(*embed_out);

  for (size_t c = 0; c < keys.size(); ++c) {
    std::vector<const std::vector<float>*> cell_feats;
    std::vector<int> labels;
    for (size_t i : members[c]) {
      cell_feats.push_back(&feats[i]);
      labels.push_back(entries[i].label);
    }
    std::vector<std::vector<float>> embs;
    const auto scores =
        score_features(net, cell_feats, 64, embed_out ? &embs : nullptr);
    if (embed_out) {
      for (size_t k = 0; k < members[c].size(); ++k) {
        const auto& e = entries[members[c][k]];
        const auto dir = *embed_out / e.condition / e.codec;
        std::filesystem::create_directories(dir);
        write_embedding(dir / (e.path.stem().string() + ".emb"), embs[k], kind);
      }
    }

    CellReport row;
    row.condition = keys[c].condition;
    row.codec = keys[c].codec;
    row.plr = keys[c].plr;
    for (int y : labels) (y == 0 ? row.n_real : row.n_fake)++;
    ScoreSet ss{scores, labels, cat(keys[c].condition, "/", keys[c].codec)};
    const EerResult r = compute_eer(ss);
    row.eer = r.eer;
    row.threshold = r.threshold;
    report.per_cell.push_back(row);

    auto& pool = pooled[keys[c].condition];
    pool.condition_tag = keys[c].condition;
    pool.scores.insert(pool.scores.end(), scores.begin(), scores.end());
    pool.labels.insert(pool.labels.end(), labels.begin(), labels.end());
  }

  double sum = 0.0;
  int n_cond = 0;
  for (auto& [cond, ss] : pooled) {
    CellReport row;
    row.condition = cond;
    row.codec = "ALL";
    row.plr = std::nan("");
    for (int y : ss.labels) (y == 0 ? row.n_real : row.n_fake)++;
    const EerResult r = compute_eer(ss);
    row.eer = r.eer;
    row.threshold = r.threshold;
    // recover the condition's loss rate from any member cell
    for (const auto& cell : report.per_cell)
      if (cell.condition == cond) row.plr = cell.plr;
    report.per_condition.push_back(row);
    sum += r.eer;
    ++n_cond;
  }
  if (n_cond > 0) report.macro_avg_eer = sum / n_cond;
  return report;
}

inline void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path);
  require(os.good(), "cannot create report: ", path.string());
  os << "condition,codec,plr,n_real,n_fake,eer,threshold\n";
  auto row = [&](const CellReport& r) {
    os << r.condition << "," << r.codec << ",";
    if (std::isnan(r.plr))
      os << "";
    else
      os << r.plr;
    os << "," << r.n_real << "," << r.n_fake << ",";
    if (r.skipped || std::isnan(r.eer))
      os << "NA,NA";
    else
      os << std::setprecision(10) << r.eer << "," << r.threshold;
    os << "\n";
  };
  for (const auto& r : report.per_cell) row(r);
  for (const auto& r : report.per_condition) row(r);
  os << "Avg,ALL,,,," << (std::isnan(report.macro_avg_eer)
                              ? std::string("NA")
                              : cat(std::setprecision(10), report.macro_avg_eer))
     << ",\n";
  require(os.good(), "short write: ", path.string());
}

}  // namespace mgaa
