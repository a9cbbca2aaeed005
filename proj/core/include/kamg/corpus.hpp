#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kamg/rng.hpp"

namespace kamg {

// Corpus file layout (all little-endian, no padding):
//   magic "KAMG" | version u32 | codebook_size u32 | height u16 | width u16 |
//   num_classes u32 | num_grids u64
// followed per grid by: class_label u32, then height*width token ids (u16).
struct CorpusHeader {
  uint32_t version = 1;
  uint32_t codebook_size = 0;  // K; token ids live in [0, K)
  uint16_t height = 0;
  uint16_t width = 0;
  uint32_t num_classes = 0;
  uint64_t num_grids = 0;

  int64_t grid_len() const { return static_cast<int64_t>(height) * width; }
};

inline constexpr char kCorpusMagic[4] = {'K', 'A', 'M', 'G'};
inline constexpr uint32_t kCorpusVersion = 1;

// One tokenized image: a row-major height x width grid of codebook ids plus
// its class label.
struct TokenGrid {
  uint32_t class_label = 0;
  std::vector<uint16_t> tokens;
};

struct Corpus {
  CorpusHeader header;
  std::vector<TokenGrid> grids;
};

void write_corpus(const CorpusHeader& header, const std::vector<TokenGrid>& grids,
                  const std::string& path);
inline void write_corpus(const Corpus& corpus, const std::string& path) {
  write_corpus(corpus.header, corpus.grids, path);
}

Corpus read_corpus(const std::string& path);

// Deterministic shuffle-split into (train, heldout); heldout gets
// round(fraction * num_grids) grids.
struct CorpusSplit {
  Corpus train;
  Corpus heldout;
};
CorpusSplit split_corpus(const Corpus& corpus, double heldout_fraction, uint64_t seed);

}  // namespace kamg
