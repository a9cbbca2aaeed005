#pragma once

// Naive reference implementations of the three graph miners, written as the
// most literal loops possible and kept independent of the library's mining
// code paths. The equivalence tests compare the optimized miners against
// these on small random corpora.

#include <cstdint>
#include <vector>

#include "kamg/corpus.hpp"
#include "kamg/graphs.hpp"
#include "kamg/rng.hpp"

namespace kamg::oracle {

// Scans every unordered pair of cells per grid and tests adjacency by
// coordinate difference.
CoocGraph cooc(const Corpus& corpus, uint64_t prune_min_count, bool count_self_pairs);

// Smoothed positional rows, one per token.
std::vector<std::vector<double>> position_rows(const Corpus& corpus, double epsilon);

// JS through the entropy identity H(m) - (H(p) + H(q)) / 2 -- a different
// algebraic route than the library's KL form; the value oracle for the
// divergence itself.
double js_entropy_form(const std::vector<double>& p, const std::vector<double>& q);

// Literal restatement of the KL form in naive code. The similarity oracle
// ranks with this one: mathematically tied candidates must round identically
// in both routes or tie-breaking would compare different orders, and the
// divergence values are already cross-checked against js_entropy_form.
double js_kl_form(const std::vector<double>& p, const std::vector<double>& q);

SimGraph similarity(const Corpus& corpus, double epsilon, int top_k);

IncompatGraph incompat(const Corpus& corpus);

// Uniform random corpus for equivalence sweeps.
Corpus random_corpus(Rng& rng, uint32_t max_k, uint16_t max_h, uint16_t max_w,
                     uint32_t max_classes, uint64_t max_grids);

}  // namespace kamg::oracle
