#include "kamg/synthetic.hpp"

#include <algorithm>
#include <string>

#include "kamg/errors.hpp"

namespace kamg {

namespace {

std::string region_str(const SynthRegion& r) {
  return "class " + std::to_string(r.class_label) + " rect(" + std::to_string(r.row0) + "," +
         std::to_string(r.col0) + "," + std::to_string(r.rows) + "," + std::to_string(r.cols) +
         ") vocab[" + std::to_string(r.vocab_lo) + "," + std::to_string(r.vocab_hi) + ")";
}

}  // namespace

void validate_synth_config(const SynthConfig& c) {
  if (c.codebook_size < 2) throw ConfigError("synthetic codebook size must be >= 2");
  if (c.codebook_size > 65535) throw ConfigError("synthetic codebook size must be <= 65535");
  if (c.height == 0 || c.width == 0) throw ConfigError("synthetic grid must be non-empty");
  if (c.num_classes == 0) throw ConfigError("synthetic corpus needs at least one class");
  if (!(c.horizontal_coherence >= 0.0 && c.horizontal_coherence <= 1.0)) {
    throw ConfigError("horizontal coherence must be in [0,1]");
  }

  // Regions of each class must tile the grid exactly once.
  const size_t n = static_cast<size_t>(c.height) * c.width;
  for (uint32_t cls = 0; cls < c.num_classes; ++cls) {
    std::vector<int> cover(n, 0);
    std::vector<std::pair<uint16_t, uint16_t>> vocab_ranges;
    for (const SynthRegion& r : c.regions) {
      if (r.class_label != cls) continue;
      if (r.row0 + r.rows > c.height || r.col0 + r.cols > c.width || r.rows == 0 || r.cols == 0) {
        throw ConfigError("region outside grid: " + region_str(r));
      }
      if (r.vocab_lo >= r.vocab_hi || r.vocab_hi > c.codebook_size) {
        throw ConfigError("bad vocabulary range: " + region_str(r));
      }
      for (uint16_t i = r.row0; i < r.row0 + r.rows; ++i)
        for (uint16_t j = r.col0; j < r.col0 + r.cols; ++j) cover[i * c.width + j]++;
      for (const auto& [lo, hi] : vocab_ranges) {
        if (r.vocab_lo < hi && lo < r.vocab_hi) {
          throw ConfigError("overlapping vocabulary ranges within class " + std::to_string(cls));
        }
      }
      vocab_ranges.emplace_back(r.vocab_lo, r.vocab_hi);
    }
    for (size_t i = 0; i < n; ++i) {
      if (cover[i] != 1) {
        throw ConfigError("class " + std::to_string(cls) + " cell " + std::to_string(i) +
                          " covered " + std::to_string(cover[i]) + " times, want exactly 1");
      }
    }
  }

  // A synonym pair must sit inside one region's range for every class, so the
  // 1/2 swap can never move a token across region vocabularies.
  for (const auto& [a, b] : c.synonym_pairs) {
    if (a == b) throw ConfigError("synonym pair maps token " + std::to_string(a) + " to itself");
    if (a >= c.codebook_size || b >= c.codebook_size) {
      throw ConfigError("synonym pair (" + std::to_string(a) + "," + std::to_string(b) +
                        ") outside codebook");
    }
    for (const SynthRegion& r : c.regions) {
      const bool a_in = a >= r.vocab_lo && a < r.vocab_hi;
      const bool b_in = b >= r.vocab_lo && b < r.vocab_hi;
      if (a_in != b_in) {
        throw ConfigError("synonym pair (" + std::to_string(a) + "," + std::to_string(b) +
                          ") straddles region boundary of " + region_str(r));
      }
    }
  }
}

SynthConfig make_band_layout(uint32_t codebook_size, uint16_t height, uint16_t width,
                             uint32_t num_classes, uint64_t num_grids, uint64_t seed,
                             double horizontal_coherence, uint32_t bands_per_class,
                             uint32_t synonyms_per_region) {
  if (bands_per_class == 0 || bands_per_class > height) {
    throw ConfigError("bands_per_class must be in [1, height]");
  }
  const uint32_t num_subsets = num_classes * bands_per_class;
  const uint32_t vocab_per_subset = codebook_size / num_subsets;
  if (vocab_per_subset < 1) {
    throw ConfigError("codebook size " + std::to_string(codebook_size) + " too small for " +
                      std::to_string(num_subsets) + " region subsets");
  }
  if (synonyms_per_region * 2 > vocab_per_subset) {
    throw ConfigError("not enough tokens per region for " + std::to_string(synonyms_per_region) +
                      " synonym pairs");
  }

  SynthConfig c;
  c.codebook_size = codebook_size;
  c.height = height;
  c.width = width;
  c.num_classes = num_classes;
  c.num_grids = num_grids;
  c.seed = seed;
  c.horizontal_coherence = horizontal_coherence;

  for (uint32_t cls = 0; cls < num_classes; ++cls) {
    for (uint32_t band = 0; band < bands_per_class; ++band) {
      const uint16_t row0 = static_cast<uint16_t>(band * height / bands_per_class);
      const uint16_t row1 = static_cast<uint16_t>((band + 1) * height / bands_per_class);
      const uint32_t subset = cls * bands_per_class + band;
      SynthRegion r;
      r.class_label = cls;
      r.row0 = row0;
      r.col0 = 0;
      r.rows = static_cast<uint16_t>(row1 - row0);
      r.cols = width;
      r.vocab_lo = static_cast<uint16_t>(subset * vocab_per_subset);
      r.vocab_hi = static_cast<uint16_t>((subset + 1) * vocab_per_subset);
      c.regions.push_back(r);
      for (uint32_t s = 0; s < synonyms_per_region; ++s) {
        c.synonym_pairs.emplace_back(static_cast<uint16_t>(r.vocab_lo + 2 * s),
                                     static_cast<uint16_t>(r.vocab_lo + 2 * s + 1));
      }
    }
  }
  validate_synth_config(c);
  return c;
}

Corpus generate_synthetic(const SynthConfig& config) {
  validate_synth_config(config);

  const int64_t n = static_cast<int64_t>(config.height) * config.width;

  // cell -> owning region, per class.
  std::vector<std::vector<const SynthRegion*>> owner(config.num_classes);
  for (auto& v : owner) v.assign(static_cast<size_t>(n), nullptr);
  for (const SynthRegion& r : config.regions) {
    for (uint16_t i = r.row0; i < r.row0 + r.rows; ++i)
      for (uint16_t j = r.col0; j < r.col0 + r.cols; ++j)
        owner[r.class_label][static_cast<size_t>(i) * config.width + j] = &r;
  }

  std::vector<int32_t> partner(config.codebook_size, -1);
  for (const auto& [a, b] : config.synonym_pairs) {
    partner[a] = b;
    partner[b] = a;
  }

  Corpus corpus;
  corpus.header.codebook_size = config.codebook_size;
  corpus.header.height = config.height;
  corpus.header.width = config.width;
  corpus.header.num_classes = config.num_classes;
  corpus.header.num_grids = config.num_grids;

  Rng rng(config.seed);
  corpus.grids.reserve(config.num_grids);
  for (uint64_t gi = 0; gi < config.num_grids; ++gi) {
    TokenGrid g;
    g.class_label = static_cast<uint32_t>(rng.below(config.num_classes));
    g.tokens.resize(static_cast<size_t>(n));
    const auto& cells = owner[g.class_label];
    for (int64_t i = 0; i < config.height; ++i) {
      for (int64_t j = 0; j < config.width; ++j) {
        const size_t cell = static_cast<size_t>(i) * config.width + static_cast<size_t>(j);
        const SynthRegion* r = cells[cell];
        if (j > 0 && cells[cell - 1] == r && rng.uniform() < config.horizontal_coherence) {
          g.tokens[cell] = g.tokens[cell - 1];
        } else {
          const uint32_t span = static_cast<uint32_t>(r->vocab_hi - r->vocab_lo);
          g.tokens[cell] = static_cast<uint16_t>(r->vocab_lo + rng.below(span));
        }
      }
    }
    for (int64_t i = 0; i < n; ++i) {
      const int32_t p = partner[g.tokens[static_cast<size_t>(i)]];
      if (p >= 0 && rng.uniform() < 0.5) g.tokens[static_cast<size_t>(i)] = static_cast<uint16_t>(p);
    }
    corpus.grids.push_back(std::move(g));
  }
  return corpus;
}

}  // namespace kamg
