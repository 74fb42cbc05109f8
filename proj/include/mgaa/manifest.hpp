#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mgaa/common.hpp"

namespace mgaa {

// One corpus item: `path<TAB>label<TAB>split`, label in {real,fake}, split in
// {train,val,test}.
struct CorpusEntry {
  std::filesystem::path path;
  int label = 0;  // 0 real, 1 fake
  std::string split;
};

struct CorpusManifest {
  std::vector<CorpusEntry> entries;

  static CorpusManifest parse(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open corpus manifest: ", path.string());
    CorpusManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cols;
      size_t start = 0;
      for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
          cols.push_back(line.substr(start, i - start));
          start = i + 1;
        }
      }
      require(cols.size() == 3, path.string(), " line ", lineno,
              ": want 'path<TAB>label<TAB>split'");
      CorpusEntry e;
      e.path = cols[0];
      if (e.path.is_relative()) e.path = path.parent_path() / e.path;
      if (cols[1] == "real")
        e.label = 0;
      else if (cols[1] == "fake")
        e.label = 1;
      else
        fail(path.string(), " line ", lineno, ": bad label '", cols[1],
             "' (want real or fake)");
      e.split = cols[2];
      require(e.split == "train" || e.split == "val" || e.split == "test",
              path.string(), " line ", lineno, ": bad split '", cols[2], "'");
      m.entries.push_back(std::move(e));
    }
    require(!m.entries.empty(), path.string(), ": empty manifest");
    return m;
  }

  void validate_paths() const {
    for (const auto& e : entries)
      require(std::filesystem::exists(e.path), "manifest entry does not exist: ",
              e.path.string());
  }

  std::vector<CorpusEntry> split(const std::string& which) const {
    std::vector<CorpusEntry> out;
    for (const auto& e : entries)
      if (e.split == which) out.push_back(e);
    return out;
  }
};

}  // namespace mgaa
