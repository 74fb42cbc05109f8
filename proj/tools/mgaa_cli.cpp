// Command line surface for the detection pipeline: feature extraction,
// corpus degradation, training, evaluation and embedding export.
//
// Exit codes: 0 success, 1 partial per-file failures, 2 config/validation
// error.

#include <atomic>
#include <filesystem>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "mgaa/mgaa.hpp"

namespace fs = std::filesystem;
using namespace mgaa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

int default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 2 : int(n);
}

// Writes through a temp name and renames, so partial outputs never land
// under the final path.
template <typename Fn>
void atomic_write(const fs::path& final_path, Fn&& writer) {
  const fs::path tmp = final_path.string() + cat(".tmp-", ::getpid());
  writer(tmp);
  fs::rename(tmp, final_path);
}

struct ExtractArgs {
  std::string manifest;
  std::string feature = "lfcc";
  std::string out;
  int jobs = default_jobs();
};

int cmd_extract(const ExtractArgs& a) {
  const CorpusManifest manifest = CorpusManifest::parse(a.manifest);
  std::map<std::string, int> stems;
  for (const auto& e : manifest.entries) {
    require(++stems[e.path.stem().string()] == 1,
            "duplicate stem in manifest: ", e.path.stem().string());
  }
  const FeatureKind kind = feature_from_name(a.feature);
  const FeatureExtractor fx(kind);
  fs::create_directories(a.out);

  std::atomic<int> written{0}, skipped{0}, failed{0};
  std::vector<std::string> errors(manifest.entries.size());
  parallel_for(int(manifest.entries.size()), a.jobs, [&](int i) {
    const auto& e = manifest.entries[size_t(i)];
    const fs::path out = fs::path(a.out) / (e.path.stem().string() + ".tf");
    try {
      if (feature_file_valid(out)) {
        ++skipped;
        return;
      }
      const TFFeature f = fx.extract(read_segment(e.path));
      atomic_write(out, [&](const fs::path& tmp) { write_feature(tmp, f); });
      ++written;
    } catch (const std::exception& ex) {
      errors[size_t(i)] = ex.what();
      ++failed;
    }
  });
  for (const auto& err : errors)
    if (!err.empty()) std::cerr << "error: " << err << "\n";
  std::cout << "extract: " << written << " written, " << skipped << " skipped, "
            << failed << " failed\n";
  return failed > 0 ? kExitPartial : kExitOk;
}

struct DegradeArgs {
  std::string manifest;
  std::string codec_manifest;
  std::string codecs = "identity,mulaw_standin";
  std::vector<double> plr{0, 1, 5, 10, 20};  // percent
  std::string loss_model = "bernoulli";
  double burst = 3.0;
  uint64_t seed = 0;
  std::string out;
  int jobs = default_jobs();
};

int cmd_degrade(const DegradeArgs& a) {
  const CorpusManifest manifest = CorpusManifest::parse(a.manifest);
  manifest.validate_paths();

  MatrixSpec matrix;
  if (a.codecs == "paper") {
    matrix = MatrixSpec::paper_protocol();
  } else {
    matrix.codecs.clear();
    for (const auto& name : cfg_detail::split(a.codecs, ','))
      matrix.codecs.push_back(codec_from_name(cfg_detail::trim(name)));
    require(!matrix.codecs.empty(), "no codecs selected");
  }
  matrix.plrs.clear();
  for (double p : a.plr) {
    require(p >= 0.0 && p <= 100.0, "--plr values are percentages in [0,100]");
    matrix.plrs.push_back(p / 100.0);
  }
  if (a.loss_model == "bernoulli")
    matrix.loss_model = LossModel::Bernoulli;
  else if (a.loss_model == "gilbert_elliott")
    matrix.loss_model = LossModel::GilbertElliott;
  else
    fail("bad --loss-model '", a.loss_model, "'");
  matrix.ge_mean_burst = a.burst;

  CodecManifest codec_manifest;
  const CodecManifest* cm = nullptr;
  if (!a.codec_manifest.empty()) {
    codec_manifest = CodecManifest::parse(a.codec_manifest);
    cm = &codec_manifest;
  }

  const ConditionMatrix result =
      build_conditions(manifest.entries, matrix, cm, a.seed, a.out, a.jobs);

  std::ofstream report(fs::path(a.out) / "matrix.csv");
  report << "condition,codec,plr,n_real,n_fake,status\n";
  int skipped = 0;
  for (const auto& c : result.cells) {
    report << c.condition << "," << codec_name(c.codec) << "," << c.plr << ","
           << c.n_real << "," << c.n_fake << ","
           << (c.skipped ? cat("skipped: ", c.skip_reason) : "ok") << "\n";
    if (c.skipped) {
      std::cerr << "warning: cell " << c.condition << "/" << codec_name(c.codec)
                << " skipped: " << c.skip_reason << "\n";
      ++skipped;
    }
  }
  std::cout << "degrade: " << result.cells.size() - size_t(skipped) << " cells built, "
            << skipped << " skipped, manifest at " << a.out << "/" << kCellsFileName
            << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string features;
  std::string manifest;
  std::string config;
  std::string feature;  // overrides config file
  std::string out;
  std::string history;
  uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) rc = read_run_config(a.config);
  if (!a.feature.empty()) rc.feature = feature_from_name(a.feature);
  if (a.seed_set) rc.train.seed = a.seed;
  rc.model.validate();
  rc.train.validate();

  const CorpusManifest manifest = CorpusManifest::parse(a.manifest);
  auto load_split = [&](const std::string& which) {
    Dataset ds;
    for (const auto& e : manifest.entries) {
      if (e.split != which) continue;
      const fs::path f = fs::path(a.features) / (e.path.stem().string() + ".tf");
      TFFeature feat = read_feature(f);
      require(feat.kind == rc.feature, f.string(), ": feature kind ",
              feature_name(feat.kind), " does not match configured ",
              feature_name(rc.feature));
      ds.push_back(LabeledFeature{std::move(feat.data), e.label});
    }
    return ds;
  };
  Dataset train_set = load_split("train");
  Dataset val_set = load_split("val");
  if (val_set.empty()) {
    // no explicit validation split: hold out 20% of the training data
    Rng rng(mix64(rc.train.seed ^ 0x76616cull));
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const size_t n_val = std::max<size_t>(1, train_set.size() / 5);
    Dataset tr, va;
    for (size_t i = 0; i < order.size(); ++i)
      (i < n_val ? va : tr).push_back(std::move(train_set[order[i]]));
    train_set = std::move(tr);
    val_set = std::move(va);
  }
  std::cout << "train: " << train_set.size() << " train / " << val_set.size()
            << " val samples\n";

  Network<float> net(rc.model, rc.train.seed);
  const TrainResult<float> result = train(net, train_set, val_set, rc.train);
  for (const auto& e : result.history)
    std::cout << "epoch " << e.epoch << ": train_loss=" << e.train_loss
              << " val_loss=" << e.val_loss << " val_eer=" << e.val_eer << "\n";
  std::cout << "best epoch " << result.best_epoch << " (val_loss "
            << result.best_val_loss << ")\n";

  atomic_write(a.out,
               [&](const fs::path& tmp) { save_checkpoint(tmp, net, rc.feature); });
  if (!a.history.empty())
    atomic_write(a.history,
                 [&](const fs::path& tmp) { write_history_csv(tmp, result.history); });
  std::cout << "checkpoint written to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string degraded;
  std::string out;
  std::string embed_out;
  std::string split = "test";
  int jobs = default_jobs();
};

int cmd_eval(const EvalArgs& a) {
  LoadedCheckpoint<float> ckpt = load_checkpoint<float>(a.checkpoint);
  auto entries = read_degraded_manifest(fs::path(a.degraded) / kCellsFileName);
  if (!a.split.empty() && a.split != "all") {
    std::vector<DegradedEntry> filtered;
    for (auto& e : entries)
      if (e.split == a.split) filtered.push_back(std::move(e));
    entries = std::move(filtered);
    require(!entries.empty(), "no entries with split '", a.split, "' in ", a.degraded);
  }
  const fs::path embed_dir = a.embed_out;
  const EvalReport report =
      evaluate_conditions(ckpt.net, ckpt.feature, entries, a.jobs,
                          a.embed_out.empty() ? nullptr : &embed_dir);
  atomic_write(a.out, [&](const fs::path& tmp) { write_eval_csv(tmp, report); });

  for (const auto& r : report.per_condition)
    std::cout << r.condition << " pooled EER " << 100.0 * r.eer << "% (" << r.n_real
              << " real / " << r.n_fake << " fake)\n";
  std::cout << "macro average EER " << 100.0 * report.macro_avg_eer << "%\n";
  std::cout << "report written to " << a.out << "\n";
  return kExitOk;
}

struct EmbedArgs {
  std::string checkpoint;
  std::string features;
  std::string manifest;
  std::string out;
  int jobs = default_jobs();
};

int cmd_embed(const EmbedArgs& a) {
  LoadedCheckpoint<float> ckpt = load_checkpoint<float>(a.checkpoint);
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(a.features))
    if (de.is_regular_file() && de.path().extension() == ".tf")
      files.push_back(de.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "no .tf feature files under ", a.features);
  fs::create_directories(a.out);

  std::vector<std::vector<float>> feats(files.size());
  std::atomic<int> failed{0};
  std::vector<std::string> errors(files.size());
  parallel_for(int(files.size()), a.jobs, [&](int i) {
    try {
      TFFeature f = read_feature(files[size_t(i)]);
      require(f.kind == ckpt.feature, files[size_t(i)].string(),
              ": feature kind does not match checkpoint");
      feats[size_t(i)] = std::move(f.data);
    } catch (const std::exception& ex) {
      errors[size_t(i)] = ex.what();
      ++failed;
    }
  });
  for (const auto& err : errors)
    if (!err.empty()) std::cerr << "error: " << err << "\n";

  std::vector<const std::vector<float>*> ptrs;
  std::vector<size_t> index;
  for (size_t i = 0; i < feats.size(); ++i)
    if (!feats[i].empty()) {
      ptrs.push_back(&feats[i]);
      index.push_back(i);
    }
  std::vector<std::vector<float>> embs;
  score_features(ckpt.net, ptrs, 64, &embs);
  for (size_t k = 0; k < index.size(); ++k) {
    const fs::path out = fs::path(a.out) / (files[index[k]].stem().string() + ".emb");
    atomic_write(out, [&](const fs::path& tmp) {
      write_embedding(tmp, embs[k], ckpt.feature);
    });
  }
  std::cout << "embed: " << index.size() << " embeddings written\n";

  if (!a.manifest.empty()) {
    const CorpusManifest manifest = CorpusManifest::parse(a.manifest);
    std::map<std::string, int> label_of;
    for (const auto& e : manifest.entries) label_of[e.path.stem().string()] = e.label;
    std::vector<std::vector<float>> x;
    std::vector<int> y;
    for (size_t k = 0; k < index.size(); ++k) {
      const auto it = label_of.find(files[index[k]].stem().string());
      if (it == label_of.end()) continue;
      x.push_back(embs[k]);
      y.push_back(it->second);
    }
    // silhouette is O(n^2 d); subsample deterministically past 2000 samples
    if (x.size() > 2000) {
      Rng rng(1);
      std::vector<size_t> order(x.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      std::vector<std::vector<float>> xs;
      std::vector<int> ys;
      for (size_t i = 0; i < 2000; ++i) {
        xs.push_back(std::move(x[order[i]]));
        ys.push_back(y[order[i]]);
      }
      x = std::move(xs);
      y = std::move(ys);
    }
    const SeparabilityReport rep = separability(x, y);
    std::cout << "separability: silhouette=" << rep.silhouette
              << " fisher_ratio=" << rep.fisher_ratio << " (n=" << x.size() << ")\n";
  }
  return failed > 0 ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio deepfake detection under communication degradation"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* s_extract = app.add_subcommand("extract", "Extract TF features from a corpus");
  s_extract->add_option("--manifest", ex.manifest, "corpus manifest (path/label/split)")
      ->required();
  s_extract->add_option("--feature", ex.feature, "lfcc, cqcc or mfcc");
  s_extract->add_option("--out", ex.out, "output directory")->required();
  s_extract->add_option("--jobs", ex.jobs, "worker count");

  DegradeArgs dg;
  auto* s_degrade =
      app.add_subcommand("degrade", "Build the degraded condition matrix");
  s_degrade->add_option("--manifest", dg.manifest, "corpus manifest")->required();
  s_degrade->add_option("--codec-manifest", dg.codec_manifest,
                        "external codec command table");
  s_degrade->add_option("--codecs", dg.codecs,
                        "comma list of codecs, or 'paper' for the six-codec protocol");
  s_degrade->add_option("--plr", dg.plr, "packet loss rates in percent");
  s_degrade->add_option("--loss-model", dg.loss_model, "bernoulli or gilbert_elliott");
  s_degrade->add_option("--burst", dg.burst, "mean burst length in frames (GE model)");
  s_degrade->add_option("--seed", dg.seed, "loss pattern seed");
  s_degrade->add_option("--out", dg.out, "output directory")->required();
  s_degrade->add_option("--jobs", dg.jobs, "worker count");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train the detector");
  s_train->add_option("--features", tr.features, "directory of .tf files")->required();
  s_train->add_option("--manifest", tr.manifest, "corpus manifest")->required();
  s_train->add_option("--config", tr.config, "key = value run config");
  s_train->add_option("--feature", tr.feature, "feature kind override");
  auto* seed_opt = s_train->add_option("--seed", tr.seed, "training seed override");
  s_train->add_option("--out", tr.out, "output checkpoint path")->required();
  s_train->add_option("--history", tr.history, "per-epoch history CSV");

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a degraded corpus");
  s_eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
  s_eval->add_option("--degraded", ev.degraded,
                     "degraded corpus directory (from 'degrade')")
      ->required();
  s_eval->add_option("--out", ev.out, "report CSV path")->required();
  s_eval->add_option("--embed-out", ev.embed_out, "per-cell embedding export dir");
  s_eval->add_option("--split", ev.split, "split to evaluate (default test, 'all')");
  s_eval->add_option("--jobs", ev.jobs, "worker count");

  EmbedArgs em;
  auto* s_embed = app.add_subcommand("embed", "Export pre-classifier embeddings");
  s_embed->add_option("--checkpoint", em.checkpoint, "trained checkpoint")->required();
  s_embed->add_option("--features", em.features, "directory of .tf files")->required();
  s_embed->add_option("--manifest", em.manifest,
                      "corpus manifest (enables the separability summary)");
  s_embed->add_option("--out", em.out, "output directory")->required();
  s_embed->add_option("--jobs", em.jobs, "worker count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (s_extract->parsed()) return cmd_extract(ex);
    if (s_degrade->parsed()) return cmd_degrade(dg);
    if (s_train->parsed()) {
      tr.seed_set = seed_opt->count() > 0;
      return cmd_train(tr);
    }
    if (s_eval->parsed()) return cmd_eval(ev);
    if (s_embed->parsed()) return cmd_embed(em);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
