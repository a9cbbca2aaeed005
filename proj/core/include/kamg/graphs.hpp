#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kamg/corpus.hpp"

namespace kamg {

// Weighted undirected token-token graph over 8-neighbourhood adjacencies.
// Keys are canonical unordered pairs (first <= second). Starts as raw counts;
// normalize_cooccurrence() turns entries into symmetric-degree weights and
// sets `normalized`.
struct CoocGraph {
  uint32_t codebook_size = 0;
  bool normalized = false;
  uint64_t prune_min_count = 0;
  bool count_self_pairs = true;
  std::map<std::pair<uint32_t, uint32_t>, double> entries;

  double entry(uint32_t a, uint32_t b) const {
    auto it = entries.find(a <= b ? std::make_pair(a, b) : std::make_pair(b, a));
    return it == entries.end() ? 0.0 : it->second;
  }
};

// Where each token occurs: smoothed probability rows (one per token, length
// grid_len) plus raw totals.
struct PositionDistribution {
  uint32_t codebook_size = 0;
  int64_t grid_len = 0;
  double epsilon = 1.0;
  std::vector<double> probs;     // codebook_size x grid_len, row-major
  std::vector<uint64_t> totals;  // occurrences per token

  std::span<const double> row(uint32_t token) const {
    return {probs.data() + static_cast<size_t>(token) * static_cast<size_t>(grid_len),
            static_cast<size_t>(grid_len)};
  }
};

// Directed nearest-neighbour graph under Jensen-Shannon divergence of
// positional distributions. Tokens absent from the corpus carry no edges.
// `farthest` keeps the maximally distant token per source for the
// replacement-robustness study.
struct SimGraph {
  struct Edge {
    uint32_t target = 0;
    double divergence = 0.0;
  };

  uint32_t codebook_size = 0;
  int64_t grid_len = 0;
  int top_k = 2;
  std::vector<std::vector<Edge>> edges;  // per source token, ascending divergence
  std::vector<Edge> farthest;            // valid iff the source token has edges
};

// Per-class bitmaps: bit (position, token) set iff the token never occurs at
// that position in the class's training grids. Classes with zero grids are
// all-incompatible and recorded in `empty_classes`.
struct IncompatGraph {
  uint32_t codebook_size = 0;
  int64_t grid_len = 0;
  uint32_t num_classes = 0;
  std::vector<std::vector<uint8_t>> bits;  // per class, grid_len rows of row_stride bytes
  std::vector<uint32_t> empty_classes;

  size_t row_stride() const { return (static_cast<size_t>(codebook_size) + 7) / 8; }
  bool incompatible(uint32_t cls, int64_t position, uint32_t token) const {
    const uint8_t byte =
        bits[cls][static_cast<size_t>(position) * row_stride() + token / 8];
    return (byte >> (token % 8)) & 1;
  }
  // Number of incompatible tokens at a position.
  int64_t set_size(uint32_t cls, int64_t position) const;
};

// --- mining ---------------------------------------------------------------

// Counts every unordered pair of 8-neighbourhood-adjacent cells once per
// occurrence, then drops pairs below prune_min_count. Equal-token pairs are
// counted unless count_self_pairs is false.
CoocGraph mine_cooccurrence(const Corpus& corpus, uint64_t prune_min_count,
                            bool count_self_pairs = true, int num_threads = 1);

// Total adjacent cell pairs contributed by a single H x W grid.
uint64_t cooc_pairs_per_grid(int64_t height, int64_t width);

// weight(i,j) = count(i,j) / sqrt(deg(i) * deg(j)); isolated tokens get a
// unit self-loop so the propagation operator stays well defined.
CoocGraph normalize_cooccurrence(CoocGraph graph);

PositionDistribution position_distribution(const Corpus& corpus, double smoothing_epsilon,
                                           int num_threads = 1);

// Base-2 Jensen-Shannon divergence; inputs must be equal-length distributions.
double js_divergence(std::span<const double> p, std::span<const double> q);

SimGraph mine_similarity(const PositionDistribution& dist, int top_k = 2, int num_threads = 1);

IncompatGraph mine_incompatibility(const Corpus& corpus, int num_threads = 1);

// --- serialization ----------------------------------------------------------
// Text formats share a single tab-separated header line ("kamg-graph" TYPE
// key=value...) followed by edge lines (src, dst, value) or, for the
// incompatibility graph, hex-encoded bitmap rows.

void export_graph(const CoocGraph& g, const std::string& path);
void export_graph(const SimGraph& g, const std::string& path);
void export_graph(const IncompatGraph& g, const std::string& path);

CoocGraph import_cooc_graph(const std::string& path);
SimGraph import_sim_graph(const std::string& path);
IncompatGraph import_incompat_graph(const std::string& path);

// FNV-1a over the canonical exported text; used to fingerprint caches.
uint64_t graph_digest(const CoocGraph& g);
uint64_t graph_digest(const SimGraph& g);
uint64_t graph_digest(const IncompatGraph& g);

}  // namespace kamg
