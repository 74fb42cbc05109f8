// Acceptance suite: runs each criterion end to end and prints one line per
// criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "mgaa/mgaa.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"
#include "support/tmpdir.hpp"

using namespace mgaa;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

#define ACCEPT(cond, msg)                               \
  do {                                                  \
    if (!(cond)) return Outcome{false, (msg)};          \
  } while (0)

template <typename T>
Tensor<T> randn_t(Rng& rng, int b, int c, int f, int t, double scale = 1.0) {
  Tensor<T> x(b, c, f, t);
  for (size_t i = 0; i < x.size(); ++i) x[i] = T(rng.normal() * scale);
  return x;
}

ModelConfig reduced_config() {
  ModelConfig cfg;
  cfg.cfeb_channels = {4};
  cfg.windows = {3, 5};
  cfg.hidden_dims = {8, 4};
  cfg.in_freq = 6;
  cfg.in_time = 10;
  cfg.dropout_p = 0.0;  // keep the loss deterministic for finite differences
  return cfg;
}

// ---- criterion 1: shape chain, parameter count, forward runtime ----

Outcome shape_and_parameter_fidelity() {
  Network<float> net(ModelConfig{}, 1);
  const size_t params = net.param_count();
  ACCEPT(params >= size_t(3.74e6 * 0.98) && params <= size_t(3.74e6 * 1.02),
         cat("parameter count ", params, " outside 3.74M +-2%"));

  const auto dims = net.config().stage_dims();
  ACCEPT((dims == std::vector<std::pair<int, int>>{{30, 63}, {15, 31}, {7, 15}}),
         "stage dims do not follow (30,63)->(15,31)->(7,15)");
  ACCEPT(net.config().flat_dim() == 13440, "flatten width is not 13440");

  Rng rng(2);
  const auto x = randn_t<float>(rng, 4, 1, 60, 126, 0.5);
  const auto t0 = Clock::now();
  Tape<float> tp;
  BoundGraph g = net.forward(tp, x, false);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  ACCEPT(tp.val(g.logits).dims() == (std::array<int, 4>{4, 2, 1, 1}),
         "logits shape is not (B,2)");
  ACCEPT(tp.val(g.embedding).c() == 13440, "embedding width is not 13440");
  ACCEPT(secs < 1.0, cat("forward took ", secs, "s (limit 1s)"));
  return {true, cat(params, " params, forward ", int(secs * 1000), "ms")};
}

// ---- criterion 2: analytic vs central finite-difference gradients ----

Outcome gradient_correctness() {
  Network<double> net(reduced_config(), 19);
  Rng rng(20);
  const auto x = randn_t<double>(rng, 2, 1, 6, 10);
  const std::vector<int> labels{0, 1};

  auto loss_value = [&]() {
    Tape<double> tp;
    BoundGraph g = net.forward(tp, x, true);
    return tp.val(ops::cross_entropy_mean(tp, g.logits, labels))[0];
  };

  Tape<double> tp;
  BoundGraph g = net.forward(tp, x, true);
  const int loss = ops::cross_entropy_mean(tp, g.logits, labels);
  tp.backward(loss);
  net.params().zero_grads();
  net.accumulate_grads(tp, g);

  const double h = 1e-3;
  double worst = 0.0;
  size_t checked = 0;
  for (auto& e : net.params().entries)
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double keep = e.value[i];
      e.value[i] = keep + h;
      const double up = loss_value();
      e.value[i] = keep - h;
      const double dn = loss_value();
      e.value[i] = keep;
      const double numeric = (up - dn) / (2 * h);
      const double analytic = e.grad[i];
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-3}));
      ++checked;
    }
  ACCEPT(worst <= 1e-4, cat("max relative gradient error ", worst, " > 1e-4"));
  return {true, cat(checked, " params, max rel err ", worst)};
}

// ---- criterion 3: attention invariants over 1000 random inputs ----

Outcome attention_invariants() {
  ModelConfig cfg;
  cfg.cfeb_channels = {8};
  cfg.windows = {3, 5};
  cfg.hidden_dims = {8, 4};
  cfg.in_freq = 6;
  cfg.in_time = 10;
  Network<float> net(cfg, 77);
  Rng rng(78);

  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = randn_t<float>(rng, 2, 8, 3, 5, 2.0);
    Tape<float> tp;
    BoundGraph g = net.bind();
    MgaaTrace trace;
    net.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
    for (int id : trace.gate_maps) {
      const auto& m = tp.val(id);
      for (size_t i = 0; i < m.size(); ++i)
        ACCEPT(m[i] > 0.0f && m[i] < 1.0f, "sigmoid map left (0,1)");
    }
    const auto& w = tp.val(trace.weights);
    for (int b = 0; b < w.b(); ++b) {
      double sum = 0.0;
      for (int i = 0; i < w.c(); ++i) {
        ACCEPT(w(b, i, 0, 0) >= 0.0f, "negative fusion weight");
        sum += w(b, i, 0, 0);
      }
      ACCEPT(std::abs(sum - 1.0) < 1e-6, cat("weights off the simplex by ", sum - 1.0));
    }
  }

  // single enabled branch passes through exactly
  ModelConfig solo = cfg;
  solo.ltfa = false;
  Network<float> gnet(solo, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = randn_t<float>(rng, 2, 8, 3, 5);
    Tape<float> tp;
    BoundGraph g = gnet.bind();
    MgaaTrace trace;
    const int out = gnet.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
    for (size_t i = 0; i < tp.val(out).size(); ++i)
      ACCEPT(tp.val(out)[i] == tp.val(trace.branches[0])[i],
             "single-branch output is not the branch itself");
  }

  // fixed equal fusion equals the branch mean
  ModelConfig fixed = cfg;
  fixed.fusion = Fusion::FixedEqual;
  Network<float> fnet(fixed, 11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = randn_t<float>(rng, 2, 8, 3, 5);
    Tape<float> tp;
    BoundGraph g = fnet.bind();
    MgaaTrace trace;
    const int out = fnet.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
    const int n = int(trace.branches.size());
    for (size_t i = 0; i < tp.val(out).size(); ++i) {
      double mean = 0.0;
      for (int k = 0; k < n; ++k) mean += tp.val(trace.branches[size_t(k)])[i];
      mean /= n;
      ACCEPT(std::abs(tp.val(out)[i] - mean) <= 1e-6 * std::max(1.0, std::abs(mean)),
             "fixed fusion differs from the branch mean");
    }
  }
  return {true, "1000 inputs, simplex within 1e-6"};
}

// ---- criterion 4: front-end oracles ----

Outcome front_end_oracles() {
  // DCT vs naive O(M^2) oracle
  Rng rng(4);
  for (int m : {20, 24}) {
    const Mat d = dct_matrix(20, m);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> in(static_cast<size_t>(m));
      for (auto& v : in) v = rng.uniform(-3.0, 3.0);
      const auto want = oracle::naive_dct(in, 20);
      for (int j = 0; j < 20; ++j) {
        double got = 0.0;
        for (int i = 0; i < m; ++i) got += d(j, i) * in[size_t(i)];
        ACCEPT(std::abs(got - want[size_t(j)]) <=
                   1e-9 * std::max(1.0, std::abs(want[size_t(j)])),
               "DCT disagrees with the naive oracle");
      }
    }
  }

  // deltas: direct-formula oracle and exact ramp slope
  Mat x(20, 126);
  for (auto& v : x.a) v = rng.normal();
  auto [d1, d2] = deltas(x, 4);
  const Mat w1 = oracle::naive_delta(x, 4);
  const Mat w2 = oracle::naive_delta(w1, 4);
  for (size_t i = 0; i < x.a.size(); ++i) {
    ACCEPT(std::abs(d1.a[i] - w1.a[i]) <= 1e-9 * std::max(1.0, std::abs(w1.a[i])),
           "first delta disagrees with the oracle");
    ACCEPT(std::abs(d2.a[i] - w2.a[i]) <= 1e-9 * std::max(1.0, std::abs(w2.a[i])),
           "second delta disagrees with the oracle");
  }
  Mat ramp(4, 60);
  for (int j = 0; j < 4; ++j)
    for (int n = 0; n < 60; ++n) ramp(j, n) = 1.25 * n;
  auto [r1, r2] = deltas(ramp, 4);
  for (int j = 0; j < 4; ++j)
    for (int n = 4; n < 56; ++n)
      ACCEPT(std::abs(r1(j, n) - 1.25) < 1e-12, "ramp delta is not the slope");

  // framing: 126 frames on both transform paths
  for (Transform tr : {Transform::STFT, Transform::CQT}) {
    SpectralConfig cfg;
    cfg.transform = tr;
    ACCEPT(cfg.n_frames() == 126, "frame count is not 126");
    AudioSegment seg;
    Rng srng(5);
    for (auto& s : seg.samples) s = float(0.1 * srng.normal());
    const Mat spec = SpectrogramPlan(cfg).compute(seg);
    ACCEPT(spec.cols == 126, "spectrogram does not have 126 frames");
  }
  return {true, "DCT/delta oracles within 1e-9, framing 126/126"};
}

// ---- criterion 5: EER engine ----

Outcome eer_engine() {
  ACCEPT(compute_eer({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}, ""}).eer == 0.0,
         "separated case is not EER 0");
  ACCEPT(compute_eer({{0.8, 0.9, 0.1, 0.2}, {0, 0, 1, 1}, ""}).eer == 1.0,
         "inverted case is not EER 1");

  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    ScoreSet s;
    for (int i = 0; i < 200; ++i) {
      s.scores.push_back(rng.uniform(0.0, 1.0));
      s.labels.push_back(0);
      s.scores.push_back(rng.uniform(0.0, 1.0));
      s.labels.push_back(1);
    }
    const double got = compute_eer(s).eer;
    const double want = oracle::naive_eer(s.scores, s.labels);
    worst = std::max(worst, std::abs(got - want));

    ScoreSet warped = s;
    for (auto& v : warped.scores) v = std::exp(2.0 * v);  // strictly increasing
    ACCEPT(std::abs(compute_eer(warped).eer - got) <= 1e-12,
           "EER is not invariant under a monotone transform");
  }
  ACCEPT(worst <= 1e-9, cat("EER deviates from the sweep oracle by ", worst));
  return {true, cat("100 score sets, max |diff| ", worst)};
}

// ---- criterion 6: degradation statistics ----

Outcome degradation_statistics() {
  {
    DegradationSpec spec;
    spec.plr = 0.10;
    spec.seed = 7;
    const auto drops = draw_loss_pattern(100000, spec);
    double frac = 0.0;
    for (bool d : drops) frac += d;
    frac /= double(drops.size());
    ACCEPT(frac >= 0.09 && frac <= 0.11, cat("bernoulli rate ", frac, " outside [9%,11%]"));
  }
  {
    const DegradationSpec spec = gilbert_elliott_for(0.10, 3.0).with_seed(11);
    const auto drops = draw_loss_pattern(200000, spec);
    double frac = 0.0;
    for (bool d : drops) frac += d;
    frac /= double(drops.size());
    ACCEPT(std::abs(frac - 0.10) <= 0.01,
           cat("gilbert-elliott stationary rate ", frac, " off by more than 1%"));
  }
  {
    AudioSegment seg;
    Rng rng(12);
    for (auto& s : seg.samples) s = float(0.5 * rng.uniform(-1.0, 1.0));
    DegradationSpec spec;
    spec.seed = 3;
    spec.plr = 0.0;
    ACCEPT(packet_loss(seg, spec).samples == seg.samples, "PLR 0 is not the identity");
    spec.plr = 1.0;
    for (float s : packet_loss(seg, spec).samples)
      ACCEPT(s == 0.0f, "PLR 1 left a nonzero sample");
  }
  {
    AudioSegment sine;
    for (int i = 0; i < AudioSegment::kLength; ++i)
      sine.samples[size_t(i)] = float(
          std::sin(2.0 * oracle::kPi * 1000.0 * i / AudioSegment::kSampleRate));
    const AudioSegment out = mulaw_standin(sine);
    double sig = 0.0, err = 0.0;
    for (int i = 0; i < AudioSegment::kLength; ++i) {
      sig += double(sine.samples[size_t(i)]) * sine.samples[size_t(i)];
      const double e = double(out.samples[size_t(i)]) - sine.samples[size_t(i)];
      err += e * e;
    }
    const double snr = 10.0 * std::log10(sig / err);
    ACCEPT(snr > 30.0, cat("mu-law round-trip SNR ", snr, " dB <= 30 dB"));
    return {true, cat("rates in band, mu-law SNR ", int(snr), " dB")};
  }
}

// ---- criterion 7: desk-scale end-to-end experiment ----

Outcome desk_scale_experiment() {
  const auto t0 = Clock::now();
  testing_support::TmpDir tmp("accept-e2e");
  Rng rng(2026);

  // synthetic corpus: 500 real-like + 500 fake-like, interleaved
  const int kPerClass = 500;
  struct Utt {
    AudioSegment seg;
    int label;
  };
  std::vector<Utt> corpus;
  corpus.reserve(2 * kPerClass);
  for (int i = 0; i < 2 * kPerClass; ++i)
    corpus.push_back({synth::segment(i % 2, rng), i % 2});

  // 75% train+val (degraded copies only, like the training protocol),
  // 25% held out for the condition matrix
  const int n_trainval = 750;
  const std::vector<double> plrs{0.0, 0.01, 0.05, 0.10, 0.20};
  FeatureExtractor fx(FeatureKind::LFCC);

  Dataset trainval(n_trainval);
  {
    std::vector<int> idx(n_trainval);
    for (int i = 0; i < n_trainval; ++i) idx[i] = i;
    parallel_for(n_trainval, 2, [&](int i) {
      DegradationSpec spec;
      spec.codec = (i % 2 == 0) ? CodecId::IDENTITY : CodecId::MULAW_STANDIN;
      spec.plr = plrs[size_t(i) % plrs.size()];
      spec.seed = mix64(1000 + uint64_t(i));
      const AudioSegment degraded = degrade(corpus[size_t(i)].seg, spec);
      trainval[size_t(i)] = {fx.extract(degraded).data, corpus[size_t(i)].label};
    });
  }
  Dataset train_set, val_set;
  for (int i = 0; i < n_trainval; ++i)
    (i % 5 == 4 ? val_set : train_set).push_back(std::move(trainval[size_t(i)]));

  // hermetic condition matrix over the held-out quarter
  std::vector<CorpusEntry> test_entries;
  const auto clean_dir = tmp.path() / "clean";
  std::filesystem::create_directories(clean_dir);
  for (int i = n_trainval; i < 2 * kPerClass; ++i) {
    const auto p = clean_dir / cat("utt", i, ".wav");
    write_wav_mono16k(p, corpus[size_t(i)].seg.samples);
    test_entries.push_back({p, corpus[size_t(i)].label, "test"});
  }
  MatrixSpec matrix;  // IDENTITY + MULAW_STANDIN x PLR {0,1,5,10,20}%
  std::vector<DegradedEntry> degraded_entries;
  build_conditions(test_entries, matrix, nullptr, 7, tmp.path() / "deg", 2,
                   &degraded_entries);

  // the training recipe: batch 256, five epochs, patience three, AdamW with
  // cosine annealing
  Network<float> net(ModelConfig{}, 2026);
  TrainConfig tc;
  tc.batch_size = 256;
  tc.micro_batch = 32;
  tc.max_epochs = 5;
  tc.patience = 3;
  tc.seed = 2026;
  const TrainResult<float> result = train(net, train_set, val_set, tc);

  const EvalReport report =
      evaluate_conditions(net, FeatureKind::LFCC, degraded_entries, 2);

  double c0 = -1.0, worst_cond = -1.0;
  std::string trend = "pooled EER by condition:";
  for (const auto& r : report.per_condition) {
    trend += cat(" ", r.condition, "=", 100.0 * r.eer, "%");
    if (r.condition == "C0") c0 = r.eer;
    if (r.condition == cat("C", matrix.n_conditions())) worst_cond = r.eer;
  }
  std::cout << "    " << trend << "\n";
  std::cout << "    (monotone C1->C5 degradation reported, not asserted)\n";

  const double mins = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  ACCEPT(c0 >= 0.0, "no C0 row in the report");
  ACCEPT(worst_cond >= 0.0, "no most-severe row in the report");
  ACCEPT(c0 < 0.05, cat("clean-condition EER ", 100.0 * c0, "% >= 5%"));
  ACCEPT(worst_cond < 0.50,
         cat("most severe condition EER ", 100.0 * worst_cond, "% >= 50%"));
  ACCEPT(mins < 15.0, cat("experiment took ", mins, " minutes (limit 15)"));
  return {true, cat("C0 ", 100.0 * c0, "%, C5 ", 100.0 * worst_cond, "%, ",
                    result.history.size(), " epochs, ", mins, " min")};
}

// ---- criterion 8: ablation variants are runnable configs ----

Outcome ablation_switches() {
  auto cfg_for = [](char which) {
    ModelConfig c;  // (j) is the default
    switch (which) {
      case 'a': c.place_shallow = c.place_deep = false; break;
      case 'b': c.ltfa = false; break;
      case 'c': c.gtfa = false; break;
      case 'd': c.place_deep = false; break;
      case 'e': c.place_shallow = false; break;
      case 'f': c.fusion = Fusion::FixedEqual; break;
      case 'g': c.windows = {3, 5}; break;
      case 'h': c.windows = {3, 5, 7}; break;
      case 'i': c.windows = {3, 5, 7, 9, 11}; break;
      case 'j': break;
    }
    return c;
  };

  auto count = [&](char which) { return Network<float>(cfg_for(which), 1).param_count(); };
  const size_t full = count('j');
  // removing structure must shed parameters; growing the window set adds them
  ACCEPT(count('a') < count('b') && count('b') < full, "GTFA-only ordering violated");
  ACCEPT(count('a') < count('c') && count('c') < full, "LTFA-only ordering violated");
  ACCEPT(count('d') < full && count('e') < full, "single-placement ordering violated");
  ACCEPT(count('d') < count('e'), "shallow placement should be the smaller model");
  ACCEPT(count('f') < full, "fixed fusion should drop the AFM head");
  ACCEPT(count('g') < count('h') && count('h') < full && full < count('i'),
         "window-set ordering violated");

  // every variant must train without error on a toy corpus
  const Dataset train_set = synth::toy_blobs(24, 3.0, 31);
  const Dataset val_set = synth::toy_blobs(8, 3.0, 32);
  TrainConfig tc;
  tc.batch_size = 24;
  tc.micro_batch = 12;
  tc.max_epochs = 1;
  tc.patience = 1;
  tc.seed = 33;
  std::string ran;
  for (char which : {'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j'}) {
    Network<float> net(cfg_for(which), 40 + which);
    const TrainResult<float> r = train(net, train_set, val_set, tc);
    ACCEPT(!r.history.empty() && std::isfinite(r.history.back().val_loss),
           cat("variant (", which, ") failed to train"));
    ran += which;
  }
  return {true, cat("variants ", ran, " trained, counts ordered")};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Entry> criteria{
      {1, "shape & parameter fidelity", shape_and_parameter_fidelity},
      {2, "gradient correctness (reduced model, f64)", gradient_correctness},
      {3, "attention invariants", attention_invariants},
      {4, "feature front-end oracles", front_end_oracles},
      {5, "EER engine vs sweep oracle", eer_engine},
      {6, "degradation statistics", degradation_statistics},
      {7, "desk-scale end-to-end experiment", desk_scale_experiment},
      {8, "ablation switches (a)-(j)", ablation_switches},
  };

  bool all_pass = true;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, cat("exception: ", e.what())};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::string line = cat("[", c.id, "] ", c.name, " ");
    while (line.size() < 52) line += '.';
    std::printf("%s %s (%s) [%.1fs]\n", line.c_str(), out.pass ? "PASS" : "FAIL",
                out.detail.c_str(), secs);
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  std::printf("%s\n", all_pass ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
  return all_pass ? 0 : 1;
}
