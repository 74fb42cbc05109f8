#include <catch2/catch_amalgamated.hpp>

#include "mgaa/model.hpp"
#include "support/oracles.hpp"

using namespace mgaa;
using oracle::DTensor;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.cfeb_channels = {4};
  cfg.windows = {3, 5};
  cfg.afm_reduction = 8;  // floors at 4
  cfg.afm_groups = 4;
  cfg.hidden_dims = {8, 4};
  cfg.in_freq = 6;
  cfg.in_time = 10;
  return cfg;
}

template <typename T>
Tensor<T> randn_t(Rng& rng, int b, int c, int f, int t, double scale = 1.0) {
  Tensor<T> x(b, c, f, t);
  for (size_t i = 0; i < x.size(); ++i) x[i] = T(rng.normal() * scale);
  return x;
}

}  // namespace

TEST_CASE("default config walks the exact shape chain down to 2 logits") {
  Network<float> net(ModelConfig{}, 1);
  Tape<float> tp;
  Rng rng(2);
  const auto x = randn_t<float>(rng, 4, 1, 60, 126, 0.5);
  BoundGraph g = net.forward(tp, x, false);
  REQUIRE(tp.val(g.logits).dims() == std::array<int, 4>{4, 2, 1, 1});
  REQUIRE(tp.val(g.embedding).dims() == std::array<int, 4>{4, 13440, 1, 1});
  REQUIRE(net.config().flat_dim() == 13440);
  const auto dims = net.config().stage_dims();
  REQUIRE(dims == std::vector<std::pair<int, int>>{{30, 63}, {15, 31}, {7, 15}});
}

TEST_CASE("default configuration lands on 3.74M trainable parameters") {
  Network<float> net(ModelConfig{}, 7);
  const double count = double(net.param_count());
  REQUIRE(count >= 3.74e6 * 0.98);
  REQUIRE(count <= 3.74e6 * 1.02);
}

TEST_CASE("config validation rejects the spec'd error cases") {
  {
    ModelConfig c = small_config();
    c.windows = {4};  // even
    REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("odd"));
  }
  {
    ModelConfig c = small_config();
    c.gtfa = c.ltfa = false;  // all branches disabled but attention placed
    REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("branches"));
  }
  {
    ModelConfig c = small_config();
    c.gtfa = c.ltfa = false;
    c.place_shallow = c.place_deep = false;  // no attention anywhere: fine
    REQUIRE_NOTHROW(c.validate());
  }
  {
    ModelConfig c = small_config();
    c.dropout_p = 1.0;
    REQUIRE_THROWS(c.validate());
  }
  {
    ModelConfig c = small_config();
    c.ltfa = true;
    c.windows.clear();
    REQUIRE_THROWS(c.validate());
  }
  {
    ModelConfig c = small_config();
    c.in_freq = 1;  // collapses at the first pool
    REQUIRE_THROWS(c.stage_dims());
  }
}

TEST_CASE("MGAA block matches the composed naive oracles") {
  ModelConfig cfg = small_config();
  Network<double> net(cfg, 33);
  Rng rng(44);
  const DTensor x = randn_t<double>(rng, 2, 4, 6, 10);

  Tape<double> tp;
  BoundGraph g = net.bind();
  MgaaTrace trace;
  const int out = net.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);

  const DTensor a_global = oracle::naive_gtfa(
      x, net.param("mgaa_shallow.gtfa.vf.weight"), net.param("mgaa_shallow.gtfa.vf.bias"),
      net.param("mgaa_shallow.gtfa.vt.weight"), net.param("mgaa_shallow.gtfa.vt.bias"));
  std::vector<DTensor> branches{a_global};
  for (int k : cfg.windows) {
    const std::string bp = cat("mgaa_shallow.ltfa", k);
    branches.push_back(oracle::naive_ltfa(
        x, k, net.param(bp + ".dwf.weight"), net.param(bp + ".dwf.bias"),
        net.param(bp + ".pwf.weight"), net.param(bp + ".pwf.bias"),
        net.param(bp + ".dwt.weight"), net.param(bp + ".dwt.bias"),
        net.param(bp + ".pwt.weight"), net.param(bp + ".pwt.bias")));
  }
  const auto weights = oracle::naive_afm(
      x, net.param("mgaa_shallow.afm.reduce.weight"), net.param("mgaa_shallow.afm.reduce.bias"),
      net.param("mgaa_shallow.afm.gn.gamma"), net.param("mgaa_shallow.afm.gn.beta"),
      cfg.afm_groups, net.param("mgaa_shallow.afm.gate.weight"),
      net.param("mgaa_shallow.afm.gate.bias"));

  // branch outputs against their oracles
  REQUIRE(trace.branches.size() == branches.size());
  for (size_t i = 0; i < branches.size(); ++i)
    for (size_t e = 0; e < branches[i].size(); ++e)
      REQUIRE(tp.val(trace.branches[i])[e] ==
              Catch::Approx(branches[i][e]).margin(1e-10));
  // fusion weights against the oracle chain
  for (int b = 0; b < 2; ++b)
    for (size_t i = 0; i < branches.size(); ++i)
      REQUIRE(tp.val(trace.weights)(b, int(i), 0, 0) ==
              Catch::Approx(weights[size_t(b)][i]).margin(1e-10));
  // fused output
  for (int b = 0; b < 2; ++b)
    for (size_t e = 0; e < x.size() / 2; ++e) {
      double want = 0.0;
      for (size_t i = 0; i < branches.size(); ++i)
        want += weights[size_t(b)][i] * branches[i][size_t(b) * (x.size() / 2) + e];
      REQUIRE(tp.val(out)[size_t(b) * (x.size() / 2) + e] ==
              Catch::Approx(want).margin(1e-10));
    }
}

TEST_CASE("zero-init gate starts fusion uniform") {
  Network<double> net(small_config(), 5);
  Rng rng(6);
  const DTensor x = randn_t<double>(rng, 3, 4, 6, 10);
  Tape<double> tp;
  BoundGraph g = net.bind();
  MgaaTrace trace;
  net.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
  const int n = int(trace.branches.size());
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < n; ++i)
      REQUIRE(tp.val(trace.weights)(b, i, 0, 0) ==
              Catch::Approx(1.0 / n).margin(1e-12));
}

TEST_CASE("attention invariants: gates in (0,1), weights on the simplex, zero gating") {
  ModelConfig cfg = small_config();
  Network<float> net(cfg, 77);
  Rng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = randn_t<float>(rng, 2, 4, 6, 10, 2.0);
    Tape<float> tp;
    BoundGraph g = net.bind();
    MgaaTrace trace;
    net.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
    for (int id : trace.gate_maps)
      for (size_t i = 0; i < tp.val(id).size(); ++i) {
        REQUIRE(tp.val(id)[i] > 0.0f);
        REQUIRE(tp.val(id)[i] < 1.0f);
      }
    const auto& w = tp.val(trace.weights);
    for (int b = 0; b < w.b(); ++b) {
      double sum = 0.0;
      for (int i = 0; i < w.c(); ++i) {
        REQUIRE(w(b, i, 0, 0) >= 0.0f);
        sum += w(b, i, 0, 0);
      }
      REQUIRE(std::abs(sum - 1.0) < 1e-6);
    }
  }

  Tensor<float> zero(2, 4, 6, 10);
  Tape<float> tp;
  BoundGraph g = net.bind();
  const int out = net.mgaa_block(tp, g, tp.leaf(zero), "mgaa_shallow", false);
  for (size_t i = 0; i < tp.val(out).size(); ++i) REQUIRE(tp.val(out)[i] == 0.0f);
}

TEST_CASE("single enabled branch passes through bitwise") {
  ModelConfig cfg = small_config();
  cfg.ltfa = false;  // global branch only
  Network<float> net(cfg, 9);
  Rng rng(10);
  const auto x = randn_t<float>(rng, 2, 4, 6, 10);

  Tape<float> tp;
  BoundGraph g = net.bind();
  MgaaTrace trace;
  const int out = net.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
  REQUIRE(trace.branches.size() == 1);
  for (int b = 0; b < 2; ++b)
    REQUIRE(tp.val(trace.weights)(b, 0, 0, 0) == 1.0f);  // softmax of one logit
  for (size_t i = 0; i < tp.val(out).size(); ++i)
    REQUIRE(tp.val(out)[i] == tp.val(trace.branches[0])[i]);
}

TEST_CASE("fixed equal fusion is the branch mean") {
  ModelConfig cfg = small_config();
  cfg.fusion = Fusion::FixedEqual;
  Network<float> net(cfg, 11);
  Rng rng(12);
  const auto x = randn_t<float>(rng, 2, 4, 6, 10);
  Tape<float> tp;
  BoundGraph g = net.bind();
  MgaaTrace trace;
  const int out = net.mgaa_block(tp, g, tp.leaf(x), "mgaa_shallow", false, &trace);
  const int n = int(trace.branches.size());
  REQUIRE(n == 3);
  for (size_t i = 0; i < tp.val(out).size(); ++i) {
    double mean = 0.0;
    for (int k = 0; k < n; ++k) mean += tp.val(trace.branches[size_t(k)])[i];
    mean /= n;
    const double got = tp.val(out)[i];
    REQUIRE(std::abs(got - mean) <= 1e-6 * std::max(1.0, std::abs(mean)));
  }
}

TEST_CASE("placement mask: no attention reproduces the plain CFEB stack") {
  ModelConfig cfg = small_config();
  cfg.place_shallow = cfg.place_deep = false;
  Network<float> net(cfg, 13);
  Rng rng(14);
  const auto x = randn_t<float>(rng, 3, 1, 6, 10);

  Tape<float> tp;
  BoundGraph g = net.forward(tp, x, false);

  // compose the same blocks by hand on a fresh tape
  Tape<float> tq;
  BoundGraph h = net.bind();
  int y = tq.leaf(x);
  y = net.cfeb_block(tq, h, y, "cfeb4", false);
  y = ops::flatten(tq, y);
  const int logits = net.classifier(tq, h, y, false, nullptr);
  REQUIRE(tp.val(g.logits).size() == tq.val(logits).size());
  for (size_t i = 0; i < tq.val(logits).size(); ++i)
    REQUIRE(tp.val(g.logits)[i] == tq.val(logits)[i]);
}

TEST_CASE("classifier rejects mismatched feature width and is eval-deterministic") {
  Network<float> net(small_config(), 15);
  Rng rng(16);
  Tensor<float> bad(2, 99, 1, 1);
  REQUIRE_THROWS_WITH(net.classify_embedding(bad),
                      Catch::Matchers::ContainsSubstring("feature dim"));

  const auto x = randn_t<float>(rng, 2, 1, 6, 10);
  auto [l1, e1] = net.infer(x);
  auto [l2, e2] = net.infer(x);
  for (size_t i = 0; i < l1.size(); ++i) REQUIRE(l1[i] == l2[i]);

  // embed then classify reproduces forward logits bit for bit
  const auto l3 = net.classify_embedding(e1);
  for (size_t i = 0; i < l1.size(); ++i) REQUIRE(l1[i] == l3[i]);
}

TEST_CASE("forward rejects wrong input shapes with the stage name") {
  Network<float> net(small_config(), 17);
  Tape<float> tp;
  Tensor<float> bad(2, 1, 5, 10);
  REQUIRE_THROWS_WITH(net.forward(tp, bad, false),
                      Catch::Matchers::ContainsSubstring("expected input"));
}

TEST_CASE("analytic gradients match finite differences on a reduced model") {
  // reduced network, f64: every op class is on the path. Dropout is disabled
  // so the loss stays a pure function of the parameters; its backward has its
  // own fixed-mask check in the op suite.
  ModelConfig cfg = small_config();
  cfg.dropout_p = 0.0;
  Network<double> net(cfg, 19);
  Rng rng(20);
  const auto x = randn_t<double>(rng, 2, 1, 6, 10);
  const std::vector<int> labels{0, 1};

  auto loss_value = [&]() {
    Tape<double> tp;
    BoundGraph g = net.forward(tp, x, true);
    return tp.val(ops::cross_entropy_mean(tp, g.logits, labels))[0];
  };

  // analytic
  Tape<double> tp;
  BoundGraph g = net.forward(tp, x, true);
  const int loss = ops::cross_entropy_mean(tp, g.logits, labels);
  tp.backward(loss);
  net.params().zero_grads();
  net.accumulate_grads(tp, g);

  // BN uses batch stats in training mode, so the loss is a pure function of
  // the parameters and finite differences are valid
  const double h = 1e-3;
  double worst = 0.0;
  for (auto& e : net.params().entries) {
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double keep = e.value[i];
      e.value[i] = keep + h;
      const double up = loss_value();
      e.value[i] = keep - h;
      const double dn = loss_value();
      e.value[i] = keep;
      const double numeric = (up - dn) / (2 * h);
      const double analytic = e.grad[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-3});
      worst = std::max(worst, rel);
    }
  }
  INFO("max relative gradient error " << worst);
  REQUIRE(worst <= 1e-4);
}

TEST_CASE("saturated batch produces vanishing gradients") {
  ModelConfig cfg = small_config();
  Network<double> net(cfg, 21);
  Rng rng(22);
  const auto x = randn_t<double>(rng, 2, 1, 6, 10);

  // drive logits to a huge margin by scaling the output layer
  Tape<double> probe;
  BoundGraph pg = net.forward(probe, x, false);
  const std::vector<int> labels{
      probe.val(pg.logits)(0, 0, 0, 0) > probe.val(pg.logits)(0, 1, 0, 0) ? 0 : 1,
      probe.val(pg.logits)(1, 0, 0, 0) > probe.val(pg.logits)(1, 1, 0, 0) ? 0 : 1};
  for (auto& e : net.params().entries)
    if (e.name == "fc3.weight" || e.name == "fc3.bias")
      for (size_t i = 0; i < e.value.size(); ++i) e.value[i] *= 400.0;

  Tape<double> tp;
  BoundGraph g = net.forward(tp, x, false);
  const int loss = ops::cross_entropy_mean(tp, g.logits, labels);
  REQUIRE(tp.val(loss)[0] < 1e-8);
  tp.backward(loss);
  net.params().zero_grads();
  net.accumulate_grads(tp, g);
  double norm = 0.0;
  for (const auto& e : net.params().entries)
    for (size_t i = 0; i < e.grad.size(); ++i) norm += e.grad[i] * e.grad[i];
  REQUIRE(std::sqrt(norm) < 1e-6);
}

TEST_CASE("ablation variants change parameter counts in the expected direction") {
  auto count = [](ModelConfig c) { return Network<float>(c, 1).param_count(); };
  const ModelConfig base;  // (j): everything on, k = {3,5,7,9}
  const size_t full = count(base);

  ModelConfig a = base;  // (a) no attention at all
  a.place_shallow = a.place_deep = false;
  ModelConfig b = base;  // (b) global only
  b.ltfa = false;
  ModelConfig c = base;  // (c) local only
  c.gtfa = false;
  ModelConfig d = base;  // (d) shallow placement only
  d.place_deep = false;
  ModelConfig e = base;  // (e) deep placement only
  e.place_shallow = false;
  ModelConfig f = base;  // (f) fixed fusion: AFM head gone
  f.fusion = Fusion::FixedEqual;
  ModelConfig gk = base;  // (g) k = {3,5}
  gk.windows = {3, 5};
  ModelConfig hk = base;  // (h) k = {3,5,7}
  hk.windows = {3, 5, 7};
  ModelConfig ik = base;  // (i) k = {3,5,7,9,11}
  ik.windows = {3, 5, 7, 9, 11};

  REQUIRE(count(a) < count(e));
  REQUIRE(count(e) < full);
  REQUIRE(count(d) < count(e));  // shallow stage is the narrower one
  REQUIRE(count(b) < full);
  REQUIRE(count(c) < full);
  REQUIRE(count(f) < full);
  REQUIRE(count(gk) < count(hk));
  REQUIRE(count(hk) < full);
  REQUIRE(full < count(ik));
}
