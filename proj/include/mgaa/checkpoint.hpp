#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mgaa/features.hpp"
#include "mgaa/model.hpp"
#include "mgaa/optimizer.hpp"
#include "mgaa/trainer.hpp"

namespace mgaa {

namespace cfg_detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<int> to_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) {
    const std::string p = trim(part);
    if (p.empty()) continue;
    try {
      size_t pos = 0;
      out.push_back(std::stoi(p, &pos));
      require(pos == p.size(), "");
    } catch (...) {
      fail("config: bad integer '", p, "' for key ", key);
    }
  }
  return out;
}

inline int to_int(const std::string& key, const std::string& s) {
  const auto v = to_ints(key, s);
  require(v.size() == 1, "config: key ", key, " wants a single integer");
  return v[0];
}

inline double to_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), "");
    return v;
  } catch (...) {
    fail("config: bad number '", s, "' for key ", key);
  }
}

inline bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail("config: bad boolean '", s, "' for key ", key);
}

}  // namespace cfg_detail

// Everything one training run needs; mirrors ModelConfig and TrainConfig.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  FeatureKind feature = FeatureKind::LFCC;
};

// Canonical text form of the architecture block. This is what gets digested
// and embedded into checkpoints, so key order is fixed.
inline std::string model_config_text(const ModelConfig& m, FeatureKind kind) {
  std::ostringstream os;
  auto ints = [&](const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  os << "feature = " << feature_name(kind) << "\n";
  os << "cfeb_channels = " << ints(m.cfeb_channels) << "\n";
  os << "windows = " << ints(m.windows) << "\n";
  os << "afm_reduction = " << m.afm_reduction << "\n";
  os << "afm_min_channels = " << m.afm_min_channels << "\n";
  os << "afm_groups = " << m.afm_groups << "\n";
  os << "placement = "
     << (m.place_shallow && m.place_deep
             ? "shallow,deep"
             : (m.place_shallow ? "shallow" : (m.place_deep ? "deep" : "none")))
     << "\n";
  os << "fusion = " << (m.fusion == Fusion::Adaptive ? "adaptive" : "fixed_equal") << "\n";
  os << "gtfa = " << (m.gtfa ? "true" : "false") << "\n";
  os << "ltfa = " << (m.ltfa ? "true" : "false") << "\n";
  os << "dropout = " << m.dropout_p << "\n";
  os << "hidden_dims = " << ints(m.hidden_dims) << "\n";
  os << "n_classes = " << m.n_classes << "\n";
  os << "in_channels = " << m.in_channels << "\n";
  os << "in_freq = " << m.in_freq << "\n";
  os << "in_time = " << m.in_time << "\n";
  return os.str();
}

// Parses `key = value` lines ('#' starts a comment). Unknown keys are
// rejected so typos cannot silently fall back to defaults.
inline RunConfig parse_run_config(const std::string& text) {
  using namespace cfg_detail;
  RunConfig rc;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line ", lineno, ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    require(!key.empty() && !val.empty(), "config line ", lineno, ": empty key or value");

    if (key == "feature") {
      rc.feature = feature_from_name(val);
    } else if (key == "cfeb_channels") {
      rc.model.cfeb_channels = to_ints(key, val);
    } else if (key == "windows") {
      rc.model.windows = to_ints(key, val);
    } else if (key == "afm_reduction") {
      rc.model.afm_reduction = to_int(key, val);
    } else if (key == "afm_min_channels") {
      rc.model.afm_min_channels = to_int(key, val);
    } else if (key == "afm_groups") {
      rc.model.afm_groups = to_int(key, val);
    } else if (key == "placement") {
      rc.model.place_shallow = rc.model.place_deep = false;
      if (val != "none")
        for (const auto& p : split(val, ',')) {
          const std::string s = trim(p);
          if (s == "shallow")
            rc.model.place_shallow = true;
          else if (s == "deep")
            rc.model.place_deep = true;
          else
            fail("config: bad placement '", s, "' (want shallow, deep or none)");
        }
    } else if (key == "fusion") {
      if (val == "adaptive")
        rc.model.fusion = Fusion::Adaptive;
      else if (val == "fixed_equal")
        rc.model.fusion = Fusion::FixedEqual;
      else
        fail("config: bad fusion '", val, "'");
    } else if (key == "gtfa") {
      rc.model.gtfa = to_bool(key, val);
    } else if (key == "ltfa") {
      rc.model.ltfa = to_bool(key, val);
    } else if (key == "dropout") {
      rc.model.dropout_p = to_double(key, val);
    } else if (key == "hidden_dims") {
      rc.model.hidden_dims = to_ints(key, val);
    } else if (key == "n_classes") {
      rc.model.n_classes = to_int(key, val);
    } else if (key == "in_channels") {
      rc.model.in_channels = to_int(key, val);
    } else if (key == "in_freq") {
      rc.model.in_freq = to_int(key, val);
    } else if (key == "in_time") {
      rc.model.in_time = to_int(key, val);
    } else if (key == "batch_size") {
      rc.train.batch_size = to_int(key, val);
    } else if (key == "micro_batch") {
      rc.train.micro_batch = to_int(key, val);
    } else if (key == "max_epochs") {
      rc.train.max_epochs = to_int(key, val);
    } else if (key == "patience") {
      rc.train.patience = to_int(key, val);
    } else if (key == "lr") {
      rc.train.lr = to_double(key, val);
    } else if (key == "lr_min") {
      rc.train.lr_min = to_double(key, val);
    } else if (key == "beta1") {
      rc.train.beta1 = to_double(key, val);
    } else if (key == "beta2") {
      rc.train.beta2 = to_double(key, val);
    } else if (key == "weight_decay") {
      rc.train.weight_decay = to_double(key, val);
    } else if (key == "seed") {
      rc.train.seed = uint64_t(std::stoull(val));
    } else {
      fail("config line ", lineno, ": unknown key '", key, "'");
    }
  }
  return rc;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open config file: ", path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

// ---- checkpoint format: magic, config digest, named parameter table ----

inline constexpr char kCheckpointMagic[8] = {'M', 'G', 'A', 'A', 'C', 'K', 'P', 'T'};

namespace ckpt_detail {

template <typename T>
void write_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
  require(name.size() < 0x10000, "parameter name too long");
  write_le<uint16_t>(os, uint16_t(name.size()));
  write_bytes(os, name.data(), name.size());
  for (int d : t.dims()) write_le<uint32_t>(os, uint32_t(d));
  for (size_t i = 0; i < t.size(); ++i) write_f32(os, float(t[i]));
}

template <typename T>
std::pair<std::string, Tensor<T>> read_tensor(std::istream& is) {
  const uint16_t len = read_le<uint16_t>(is);
  std::string name(len, '\0');
  read_bytes(is, name.data(), len);
  uint32_t d[4];
  for (auto& x : d) x = read_le<uint32_t>(is);
  require(d[0] > 0 && d[1] > 0 && d[2] > 0 && d[3] > 0, "checkpoint: bad dims for ", name);
  Tensor<T> t{int(d[0]), int(d[1]), int(d[2]), int(d[3])};
  for (size_t i = 0; i < t.size(); ++i) t[i] = T(read_f32(is));
  return {std::move(name), std::move(t)};
}

}  // namespace ckpt_detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net,
                     FeatureKind kind, const AdamW<T>* opt = nullptr) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot create checkpoint: ", path.string());
  const std::string cfg = model_config_text(net.config(), kind);
  write_bytes(os, kCheckpointMagic, 8);
  write_le<uint32_t>(os, 1);  // version
  write_le<uint32_t>(os, uint32_t(cfg.size()));
  write_bytes(os, cfg.data(), cfg.size());
  write_le<uint64_t>(os, fnv1a64(cfg));

  const auto& store = net.params();
  write_le<uint32_t>(os, uint32_t(store.entries.size()));
  for (const auto& e : store.entries) ckpt_detail::write_tensor(os, e.name, e.value);
  write_le<uint32_t>(os, uint32_t(store.buffers.size()));
  for (const auto& [n, b] : store.buffers) ckpt_detail::write_tensor(os, n, b);

  const bool with_opt = opt != nullptr && !store.entries.empty() &&
                        !store.entries.front().adam_m.empty();
  write_le<uint8_t>(os, with_opt ? 1 : 0);
  if (with_opt) {
    write_le<uint64_t>(os, uint64_t(opt->step_count()));
    for (const auto& e : store.entries) {
      ckpt_detail::write_tensor(os, e.name + "#m", e.adam_m);
      ckpt_detail::write_tensor(os, e.name + "#v", e.adam_v);
    }
  }
  require(os.good(), "short write: ", path.string());
}

template <typename T>
struct LoadedCheckpoint {
  FeatureKind feature = FeatureKind::LFCC;
  Network<T> net;
  std::optional<uint64_t> adam_step;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open checkpoint: ", path.string());
  char magic[8];
  read_bytes(is, magic, 8);
  require(std::memcmp(magic, kCheckpointMagic, 8) == 0, path.string(),
          ": bad checkpoint magic");
  const uint32_t version = read_le<uint32_t>(is);
  require(version == 1, path.string(), ": unsupported checkpoint version ", version);
  const uint32_t cfg_len = read_le<uint32_t>(is);
  require(cfg_len < (1u << 20), path.string(), ": absurd config size");
  std::string cfg(cfg_len, '\0');
  read_bytes(is, cfg.data(), cfg_len);
  const uint64_t digest = read_le<uint64_t>(is);
  require(digest == fnv1a64(cfg), path.string(), ": config digest mismatch");

  RunConfig rc = parse_run_config(cfg);
  LoadedCheckpoint<T> out{rc.feature, Network<T>(rc.model, 0), std::nullopt};
  auto& store = out.net.params();

  const uint32_t n_params = read_le<uint32_t>(is);
  require(n_params == store.entries.size(), path.string(), ": parameter count mismatch (",
          n_params, " vs ", store.entries.size(), ")");
  for (auto& e : store.entries) {
    auto [name, t] = ckpt_detail::read_tensor<T>(is);
    require(name == e.name, path.string(), ": parameter order mismatch at ", e.name);
    require(t.same_shape(e.value), path.string(), ": shape mismatch for ", name);
    e.value = std::move(t);
  }
  const uint32_t n_buffers = read_le<uint32_t>(is);
  require(n_buffers == store.buffers.size(), path.string(), ": buffer count mismatch");
  for (auto& [bname, buf] : store.buffers) {
    auto [name, t] = ckpt_detail::read_tensor<T>(is);
    require(name == bname, path.string(), ": buffer order mismatch at ", bname);
    require(t.same_shape(buf), path.string(), ": shape mismatch for ", name);
    buf = std::move(t);
  }
  const uint8_t with_opt = read_le<uint8_t>(is);
  if (with_opt) {
    out.adam_step = read_le<uint64_t>(is);
    for (auto& e : store.entries) {
      auto [mn, m] = ckpt_detail::read_tensor<T>(is);
      auto [vn, v] = ckpt_detail::read_tensor<T>(is);
      require(mn == e.name + "#m" && vn == e.name + "#v", path.string(),
              ": optimizer state mismatch at ", e.name);
      e.adam_m = std::move(m);
      e.adam_v = std::move(v);
    }
  }
  return out;
}

}  // namespace mgaa
