#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mgaa/ops.hpp"
#include "mgaa/tape.hpp"

namespace mgaa {

enum class Fusion { Adaptive, FixedEqual };

// Architecture hyperparameters. The defaults reproduce the full network:
// CFEB stack 32/64/128, four local attention windows, attention at both the
// shallow and deep positions, adaptive fusion.
struct ModelConfig {
  std::vector<int> cfeb_channels{32, 64, 128};
  std::vector<int> windows{3, 5, 7, 9};
  int afm_reduction = 8;
  int afm_min_channels = 4;
  int afm_groups = 4;
  bool place_shallow = true;
  bool place_deep = true;
  Fusion fusion = Fusion::Adaptive;
  bool gtfa = true;
  bool ltfa = true;
  double dropout_p = 0.3;
  std::vector<int> hidden_dims{256, 64};
  int n_classes = 2;
  int in_channels = 1;
  int in_freq = 60;
  int in_time = 126;

  void validate() const {
    require(!cfeb_channels.empty(), "config: need at least one embedding block");
    for (int c : cfeb_channels) require(c > 0, "config: bad channel count ", c);
    for (int k : windows)
      require(k >= 3 && k % 2 == 1, "config: window sizes must be odd and >= 3, got ", k);
    if (ltfa) require(!windows.empty(), "config: local attention enabled but no windows");
    if (place_shallow || place_deep)
      require(gtfa || ltfa, "config: attention placed but all branches disabled");
    require(afm_reduction >= 1, "config: afm_reduction must be >= 1");
    require(afm_min_channels >= 1, "config: afm_min_channels must be >= 1");
    require(afm_groups >= 1, "config: afm_groups must be >= 1");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "config: dropout must be in [0,1)");
    require(hidden_dims.size() == 2, "config: classifier wants two hidden dims");
    for (int h : hidden_dims) require(h > 0, "config: bad hidden dim ", h);
    require(n_classes >= 2, "config: need at least two classes");
    require(in_channels > 0 && in_freq > 0 && in_time > 0, "config: bad input dims");
  }

  int afm_reduced(int channels) const {
    return std::max(channels / afm_reduction, afm_min_channels);
  }

  int n_branches() const {
    return (gtfa ? 1 : 0) + (ltfa ? int(windows.size()) : 0);
  }

  // (F, T) after each pooling stage, floor semantics.
  std::vector<std::pair<int, int>> stage_dims() const {
    std::vector<std::pair<int, int>> dims;
    int f = in_freq, t = in_time;
    for (size_t i = 0; i < cfeb_channels.size(); ++i) {
      require(f >= 2 && t >= 2, "config: spatial dims collapse at block ", i + 1,
              " (", f, "x", t, ")");
      f /= 2;
      t /= 2;
      dims.emplace_back(f, t);
    }
    return dims;
  }

  int flat_dim() const {
    const auto dims = stage_dims();
    return cfeb_channels.back() * dims.back().first * dims.back().second;
  }
};

// Named trainable tensors plus non-trainable buffers (batch-norm running
// statistics). Entry order is the construction order and is part of the
// checkpoint contract.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m, adam_v;  // allocated by the optimizer on first use
  };

  std::vector<Entry> entries;
  std::vector<std::pair<std::string, Tensor<T>>> buffers;

  int add(const std::string& name, Tensor<T> value) {
    entries.push_back(Entry{name, std::move(value), Tensor<T>(), Tensor<T>(), Tensor<T>()});
    return int(entries.size()) - 1;
  }

  Tensor<T>& buffer(const std::string& name, Tensor<T> init) {
    buffers.emplace_back(name, std::move(init));
    return buffers.back().second;
  }

  Tensor<T>* find_buffer(const std::string& name) {
    for (auto& [n, t] : buffers)
      if (n == name) return &t;
    return nullptr;
  }

  size_t trainable_count() const {
    size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries) {
      if (e.grad.empty()) {
        const auto& d = e.value.dims();
        e.grad = Tensor<T>(d[0], d[1], d[2], d[3]);
      } else {
        e.grad.fill(T(0));
      }
    }
  }
};

// Ids of the tape leaves bound to parameters for one forward pass, plus the
// interesting outputs.
struct BoundGraph {
  std::vector<int> param_leaf;  // index parallel to ParamStore::entries
  int input = -1;
  int embedding = -1;  // flattened pre-classifier features
  int logits = -1;
};

// Node ids of the attention internals, for invariant checks.
struct MgaaTrace {
  std::vector<int> branches;
  std::vector<int> gate_maps;  // sigmoid outputs, all in (0,1)
  int weights = -1;            // (B, n_branches, 1, 1) on the simplex
};

// The detection network: CFEB embedding stack with multi-granularity
// adaptive attention at the shallow and/or deep position, followed by a
// three-layer classifier.
template <typename T>
class Network {
 public:
  Network(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(mix64(init_seed ^ 0x6d6761616d646cull));
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  size_t param_count() const { return params_.trainable_count(); }

  // Builds the forward graph on the tape. `dropout_rng` is only consulted in
  // training mode. Thread-safe for concurrent eval passes on one const
  // network since all mutable state lives in the tape (batch-norm running
  // stats are only written in training mode).
  BoundGraph forward(Tape<T>& tp, const Tensor<T>& input, bool training,
                     Rng* dropout_rng = nullptr) {
    require(input.c() == cfg_.in_channels && input.f() == cfg_.in_freq &&
                input.t() == cfg_.in_time,
            "forward: expected input (B,", cfg_.in_channels, ",", cfg_.in_freq, ",",
            cfg_.in_time, "), got (", input.b(), ",", input.c(), ",", input.f(), ",",
            input.t(), ")");
    require(input.all_finite(), "forward: non-finite input");

    BoundGraph g;
    g.param_leaf.assign(params_.entries.size(), -1);
    g.input = tp.leaf(input);

    int x = g.input;
    const auto dims = cfg_.stage_dims();
    for (size_t i = 0; i < cfg_.cfeb_channels.size(); ++i) {
      const std::string p = block_prefix(i);
      x = cfeb_block(tp, g, x, p, training);
      require(tp.val(x).f() == dims[i].first && tp.val(x).t() == dims[i].second,
              p, ": unexpected output shape");
      if (i == 0 && cfg_.place_shallow)
        x = mgaa_block(tp, g, x, "mgaa_shallow", training);
      if (i + 1 == cfg_.cfeb_channels.size() && cfg_.place_deep)
        x = mgaa_block(tp, g, x, "mgaa_deep", training);
    }

    g.embedding = ops::flatten(tp, x);
    require(tp.val(g.embedding).c() == cfg_.flat_dim(), "flatten: expected ",
            cfg_.flat_dim(), " features, got ", tp.val(g.embedding).c());
    g.logits = classifier(tp, g, g.embedding, training, dropout_rng);
    return g;
  }

  // Classifier head on already-flattened features; used by forward and by
  // the embedding export path.
  int classifier(Tape<T>& tp, BoundGraph& g, int flat, bool training,
                 Rng* dropout_rng) {
    require(tp.val(flat).c() == cfg_.flat_dim(), "classifier: feature dim ",
            tp.val(flat).c(), " does not match weights (", cfg_.flat_dim(), ")");
    int h = ops::linear(tp, flat, lift(tp, g, "fc1.weight"), lift(tp, g, "fc1.bias"));
    h = bn(tp, g, h, "fc1_bn", training);
    h = ops::relu(tp, h);
    h = ops::dropout(tp, h, cfg_.dropout_p, training, dropout_rng);
    h = ops::linear(tp, h, lift(tp, g, "fc2.weight"), lift(tp, g, "fc2.bias"));
    h = bn(tp, g, h, "fc2_bn", training);
    h = ops::relu(tp, h);
    return ops::linear(tp, h, lift(tp, g, "fc3.weight"), lift(tp, g, "fc3.bias"));
  }

  // Convenience eval-mode pass; returns (logits, embeddings) as plain tensors.
  std::pair<Tensor<T>, Tensor<T>> infer(const Tensor<T>& input) {
    Tape<T> tp;
    BoundGraph g = forward(tp, input, /*training=*/false);
    return {tp.val(g.logits), tp.val(g.embedding)};
  }

  // Classifier head alone on exported embeddings; composing it after the
  // embedding path reproduces the full forward logits bit for bit.
  Tensor<T> classify_embedding(const Tensor<T>& flat) {
    Tape<T> tp;
    BoundGraph g;
    g.param_leaf.assign(params_.entries.size(), -1);
    const int logits = classifier(tp, g, tp.leaf(flat), /*training=*/false, nullptr);
    return tp.val(logits);
  }

  // Adds each leaf gradient into the store's accumulators.
  void accumulate_grads(Tape<T>& tp, const BoundGraph& g) {
    for (size_t i = 0; i < params_.entries.size(); ++i) {
      const int leaf = g.param_leaf[i];
      if (leaf < 0 || !tp.grad_touched(leaf)) continue;
      auto& acc = params_.entries[i].grad;
      const auto& src = tp.grad(leaf);
      if (acc.empty()) {
        const auto& d = params_.entries[i].value.dims();
        acc = Tensor<T>(d[0], d[1], d[2], d[3]);
      }
      for (size_t k = 0; k < src.size(); ++k) acc[k] += src[k];
    }
  }

  // One embedding block: conv 3x3 pad 1, batch norm, ReLU, 2x max pool.
  int cfeb_block(Tape<T>& tp, BoundGraph& g, int x, const std::string& p, bool training) {
    require(tp.val(x).f() >= 2 && tp.val(x).t() >= 2, p,
            ": input spatial dims must be >= 2");
    int h = ops::conv2d(tp, x, lift(tp, g, p + ".conv.weight"),
                        lift(tp, g, p + ".conv.bias"), 1, 1);
    h = bn(tp, g, h, p + ".bn", training);
    h = ops::relu(tp, h);
    return ops::maxpool2x2(tp, h);
  }

  // The attention stage: one global branch, one local branch per window size,
  // fused by adaptive softmax weights (or fixed equal weights). Every branch
  // gates the input multiplicatively, so zero input stays zero.
  int mgaa_block(Tape<T>& tp, BoundGraph& g, int x, const std::string& p, bool training,
                 MgaaTrace* trace = nullptr) {
    std::vector<int> branches;
    std::vector<int> gates;
    if (cfg_.gtfa) {
      const int mf = ops::sigmoid(
          tp, pointwise(tp, g, ops::avgpool_freq(tp, x), p + ".gtfa.vf"));
      const int mt = ops::sigmoid(
          tp, pointwise(tp, g, ops::avgpool_time(tp, x), p + ".gtfa.vt"));
      gates.push_back(mf);
      gates.push_back(mt);
      branches.push_back(ops::mul(tp, ops::mul(tp, x, mf), mt));
    }
    if (cfg_.ltfa) {
      for (int k : cfg_.windows) {
        const std::string bp = cat(p, ".ltfa", k);
        const int df = ops::depthwise_conv2d(tp, x, lift(tp, g, bp + ".dwf.weight"),
                                             lift(tp, g, bp + ".dwf.bias"), (k - 1) / 2, 0);
        const int mf = ops::sigmoid(tp, pointwise(tp, g, df, bp + ".pwf"));
        const int dt = ops::depthwise_conv2d(tp, x, lift(tp, g, bp + ".dwt.weight"),
                                             lift(tp, g, bp + ".dwt.bias"), 0, (k - 1) / 2);
        const int mt = ops::sigmoid(tp, pointwise(tp, g, dt, bp + ".pwt"));
        gates.push_back(mf);
        gates.push_back(mt);
        branches.push_back(ops::mul(tp, ops::mul(tp, x, mf), mt));
      }
    }
    require(!branches.empty(), p, ": no attention branches enabled");

    int weights;
    const int n = int(branches.size());
    if (cfg_.fusion == Fusion::Adaptive) {
      int h = ops::global_avgpool(tp, x);
      h = pointwise(tp, g, h, p + ".afm.reduce");
      h = ops::group_norm(tp, h, lift(tp, g, p + ".afm.gn.gamma"),
                          lift(tp, g, p + ".afm.gn.beta"), cfg_.afm_groups);
      h = ops::relu(tp, h);
      h = pointwise(tp, g, h, p + ".afm.gate");
      weights = ops::softmax_channels(tp, h);
    } else {
      Tensor<T> w(tp.val(x).b(), n, 1, 1);
      w.fill(T(1.0 / n));
      weights = tp.leaf(std::move(w));
    }
    if (trace) {
      trace->branches = branches;
      trace->gate_maps = gates;
      trace->weights = weights;
    }
    return ops::combine(tp, branches, weights);
  }

  BoundGraph bind() const {
    BoundGraph g;
    g.param_leaf.assign(params_.entries.size(), -1);
    return g;
  }

  const Tensor<T>& param(const std::string& name) const {
    return params_.entries[size_t(entry_index(name))].value;
  }

 private:
  std::string block_prefix(size_t i) const { return cat("cfeb", cfg_.cfeb_channels[i]); }

  int entry_index(const std::string& name) const {
    const auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter ", name);
    return it->second;
  }

  int lift(Tape<T>& tp, BoundGraph& g, const std::string& name) {
    const int idx = entry_index(name);
    if (g.param_leaf[size_t(idx)] < 0)
      g.param_leaf[size_t(idx)] = tp.leaf(params_.entries[size_t(idx)].value);
    return g.param_leaf[size_t(idx)];
  }

  int bn(Tape<T>& tp, BoundGraph& g, int x, const std::string& p, bool training) {
    return ops::batch_norm(tp, x, lift(tp, g, p + ".gamma"), lift(tp, g, p + ".beta"),
                           params_.find_buffer(p + ".running_mean"),
                           params_.find_buffer(p + ".running_var"), training);
  }

  int pointwise(Tape<T>& tp, BoundGraph& g, int x, const std::string& p) {
    return ops::conv2d(tp, x, lift(tp, g, p + ".weight"), lift(tp, g, p + ".bias"), 0, 0);
  }

  // ---- construction ----

  Tensor<T> kaiming(Rng& rng, int b, int c, int f, int t, int fan_in) {
    Tensor<T> w(b, c, f, t);
    const double bound = std::sqrt(6.0 / fan_in);
    for (size_t i = 0; i < w.size(); ++i) w[i] = T(rng.uniform(-bound, bound));
    return w;
  }

  void add_param(const std::string& name, Tensor<T> v) {
    index_[name] = params_.add(name, std::move(v));
  }

  void add_conv(Rng& rng, const std::string& p, int co, int ci, int kf, int kt) {
    add_param(p + ".weight", kaiming(rng, co, ci, kf, kt, ci * kf * kt));
    add_param(p + ".bias", Tensor<T>(1, co, 1, 1));
  }

  void add_bn(const std::string& p, int c) {
    Tensor<T> ones(1, c, 1, 1);
    ones.fill(T(1));
    add_param(p + ".gamma", ones);
    add_param(p + ".beta", Tensor<T>(1, c, 1, 1));
    params_.buffer(p + ".running_mean", Tensor<T>(1, c, 1, 1));
    Tensor<T> rv(1, c, 1, 1);
    rv.fill(T(1));
    params_.buffer(p + ".running_var", std::move(rv));
  }

  void add_mgaa(Rng& rng, const std::string& p, int c) {
    if (cfg_.gtfa) {
      add_conv(rng, p + ".gtfa.vf", c, c, 1, 1);
      add_conv(rng, p + ".gtfa.vt", c, c, 1, 1);
    }
    if (cfg_.ltfa) {
      for (int k : cfg_.windows) {
        const std::string bp = cat(p, ".ltfa", k);
        add_param(bp + ".dwf.weight", kaiming(rng, c, 1, k, 1, k));
        add_param(bp + ".dwf.bias", Tensor<T>(1, c, 1, 1));
        add_conv(rng, bp + ".pwf", c, c, 1, 1);
        add_param(bp + ".dwt.weight", kaiming(rng, c, 1, 1, k, k));
        add_param(bp + ".dwt.bias", Tensor<T>(1, c, 1, 1));
        add_conv(rng, bp + ".pwt", c, c, 1, 1);
      }
    }
    if (cfg_.fusion == Fusion::Adaptive) {
      const int r = cfg_.afm_reduced(c);
      require(r % cfg_.afm_groups == 0, "config: afm_groups ", cfg_.afm_groups,
              " does not divide reduced width ", r);
      add_conv(rng, p + ".afm.reduce", r, c, 1, 1);
      Tensor<T> ones(1, r, 1, 1);
      ones.fill(T(1));
      add_param(p + ".afm.gn.gamma", ones);
      add_param(p + ".afm.gn.beta", Tensor<T>(1, r, 1, 1));
      // zero init so every branch starts with the same weight
      add_param(p + ".afm.gate.weight", Tensor<T>(cfg_.n_branches(), r, 1, 1));
      add_param(p + ".afm.gate.bias", Tensor<T>(1, cfg_.n_branches(), 1, 1));
    }
  }

  void build(Rng& rng) {
    int ci = cfg_.in_channels;
    for (size_t i = 0; i < cfg_.cfeb_channels.size(); ++i) {
      const int co = cfg_.cfeb_channels[i];
      const std::string p = block_prefix(i);
      add_conv(rng, p + ".conv", co, ci, 3, 3);
      add_bn(p + ".bn", co);
      if (i == 0 && cfg_.place_shallow) add_mgaa(rng, "mgaa_shallow", co);
      if (i + 1 == cfg_.cfeb_channels.size() && cfg_.place_deep)
        add_mgaa(rng, "mgaa_deep", co);
      ci = co;
    }
    const int d = cfg_.flat_dim();
    add_param("fc1.weight", kaiming(rng, cfg_.hidden_dims[0], d, 1, 1, d));
    add_param("fc1.bias", Tensor<T>(1, cfg_.hidden_dims[0], 1, 1));
    add_bn("fc1_bn", cfg_.hidden_dims[0]);
    add_param("fc2.weight",
              kaiming(rng, cfg_.hidden_dims[1], cfg_.hidden_dims[0], 1, 1,
                      cfg_.hidden_dims[0]));
    add_param("fc2.bias", Tensor<T>(1, cfg_.hidden_dims[1], 1, 1));
    add_bn("fc2_bn", cfg_.hidden_dims[1]);
    add_param("fc3.weight",
              kaiming(rng, cfg_.n_classes, cfg_.hidden_dims[1], 1, 1, cfg_.hidden_dims[1]));
    add_param("fc3.bias", Tensor<T>(1, cfg_.n_classes, 1, 1));
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
  std::map<std::string, int> index_;
};

}  // namespace mgaa
