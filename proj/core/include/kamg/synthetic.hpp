#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kamg/corpus.hpp"

namespace kamg {

// A rectangle of cells owned by one class, drawing tokens from a contiguous
// vocabulary range [vocab_lo, vocab_hi).
struct SynthRegion {
  uint32_t class_label = 0;
  uint16_t row0 = 0;
  uint16_t col0 = 0;
  uint16_t rows = 0;
  uint16_t cols = 0;
  uint16_t vocab_lo = 0;
  uint16_t vocab_hi = 0;
};

// Planted-structure generator configuration. Per class the regions must tile
// the grid exactly and use pairwise-disjoint vocabulary ranges; synonym pairs
// must lie inside a single region's range so the post-hoc swap never moves a
// token out of its region.
struct SynthConfig {
  uint32_t codebook_size = 0;
  uint16_t height = 0;
  uint16_t width = 0;
  uint32_t num_classes = 0;
  uint64_t num_grids = 0;
  uint64_t seed = 0;
  double horizontal_coherence = 0.0;
  std::vector<SynthRegion> regions;
  std::vector<std::pair<uint16_t, uint16_t>> synonym_pairs;
};

// Canonical layout: each class splits the grid into `bands_per_class`
// horizontal bands; every (class, band) gets its own contiguous vocabulary
// slice, and the first `synonyms_per_region` consecutive token pairs of each
// slice are declared synonyms.
SynthConfig make_band_layout(uint32_t codebook_size, uint16_t height, uint16_t width,
                             uint32_t num_classes, uint64_t num_grids, uint64_t seed,
                             double horizontal_coherence, uint32_t bands_per_class,
                             uint32_t synonyms_per_region);

// Per grid: pick a class uniformly, fill cells row-major from the owning
// region's vocabulary (copying the left neighbour with probability
// horizontal_coherence when it shares the region), then flip every token to
// its synonym partner with probability 1/2. Bit-reproducible from the seed.
Corpus generate_synthetic(const SynthConfig& config);

void validate_synth_config(const SynthConfig& config);

}  // namespace kamg
