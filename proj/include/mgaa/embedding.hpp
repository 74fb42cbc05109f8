#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mgaa/features.hpp"

namespace mgaa {

// Pre-classifier embeddings use the same binary framing as features but with
// their own magic and dims (1, 1, d).
inline constexpr char kEmbeddingMagic[8] = {'M', 'G', 'A', 'A', 'E', 'M', 'B', '1'};

inline void write_embedding(const std::filesystem::path& path,
                            const std::vector<float>& emb, FeatureKind kind) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot create embedding file: ", path.string());
  write_bytes(os, kEmbeddingMagic, 8);
  write_le<uint8_t>(os, uint8_t(kind));
  write_le<uint32_t>(os, 1);
  write_le<uint32_t>(os, 1);
  write_le<uint32_t>(os, uint32_t(emb.size()));
  for (float v : emb) write_f32(os, v);
  require(os.good(), "short write: ", path.string());
}

inline std::vector<float> read_embedding(const std::filesystem::path& path,
                                         FeatureKind* kind = nullptr) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open embedding file: ", path.string());
  char magic[8];
  read_bytes(is, magic, 8);
  require(std::memcmp(magic, kEmbeddingMagic, 8) == 0, path.string(),
          ": bad embedding magic");
  const uint8_t k = read_le<uint8_t>(is);
  require(k <= 2, path.string(), ": bad feature kind");
  if (kind) *kind = FeatureKind(k);
  const uint32_t c = read_le<uint32_t>(is);
  const uint32_t f = read_le<uint32_t>(is);
  const uint32_t d = read_le<uint32_t>(is);
  require(c == 1 && f == 1 && d > 0, path.string(), ": bad embedding dims");
  std::vector<float> out(d);
  for (float& v : out) v = read_f32(is);
  return out;
}

}  // namespace mgaa
