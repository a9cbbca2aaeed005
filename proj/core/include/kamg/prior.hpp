#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "kamg/autodiff.hpp"
#include "kamg/graphs.hpp"
#include "kamg/rng.hpp"

namespace kamg {

// Three-layer GCN weights (d x d each); ReLU after layers 0 and 1 only, so
// the encoded priors are unconstrained in sign.
struct GcnWeights {
  Tensor w[3];
  Tensor b[3];

  static GcnWeights init(int64_t dim, Rng& rng, double std_dev = 0.02);
};

// Node ids of GCN weights bound into a tape.
struct GcnNodeIds {
  Tape::NodeId w[3];
  Tape::NodeId b[3];
};

// Propagation operator A_hat: adjacency plus unit self-loops, renormalized.
// The co-occurrence graph is symmetric and gets symmetric degree
// normalization; the similarity graph is directed (edges weighted 1/top_k)
// and gets row normalization.
SparseOperator cooc_propagation(const CoocGraph& graph);
SparseOperator sim_propagation(const SimGraph& graph);

// N x K row-averaging selector for one class: row i spreads 1/|I_i| over the
// tokens incompatible with position i (zero row when the set is empty).
SparseOperator incompat_selector(const IncompatGraph& graph, uint32_t cls);

// H0 = C; Hl+1 = relu(A_hat Hl Wl + bl) for l = 0,1; output layer linear.
Tape::NodeId gcn_forward(Tape& tape, const SparseOperator& prop, Tape::NodeId codebook,
                         const GcnNodeIds& params);

// p_i = mean over incompatible tokens t of C_t W, as an N x d tensor.
Tape::NodeId negative_position_embedding(Tape& tape, const SparseOperator& selector,
                                         Tape::NodeId codebook, Tape::NodeId neg_w);

// Value-level wrappers (fresh tape, no gradients).
Tensor gcn_forward_value(const SparseOperator& prop, const Tensor& codebook,
                         const GcnWeights& params);
Tensor negative_position_embedding_value(const SparseOperator& selector, const Tensor& codebook,
                                         const Tensor& neg_w);

enum class PriorPolicy { kPrecomputed, kOnline };

PriorPolicy parse_prior_policy(const std::string& s);
std::string prior_policy_name(PriorPolicy p);

struct PriorCachePolicy {
  PriorPolicy cooc = PriorPolicy::kPrecomputed;
  PriorPolicy sim = PriorPolicy::kPrecomputed;
  PriorPolicy neg = PriorPolicy::kOnline;
};

// Encoded prior embeddings, precomputed per policy. Digests fingerprint the
// source graphs so a stale cache is detectable.
struct PriorCache {
  uint32_t codebook_size = 0;
  int64_t grid_len = 0;
  int64_t dim = 0;
  uint32_t num_classes = 0;
  PriorCachePolicy policy;
  uint64_t cooc_digest = 0;
  uint64_t sim_digest = 0;
  uint64_t incompat_digest = 0;
  Tensor cooc_embed;                   // K x d, valid when policy.cooc precomputed
  Tensor sim_embed;                    // K x d, valid when policy.sim precomputed
  std::map<uint32_t, Tensor> neg_embed;  // per class N x d, valid when policy.neg precomputed
};

PriorCache build_prior_cache(const CoocGraph& cooc, const SimGraph& sim,
                             const IncompatGraph& incompat, const Tensor& codebook,
                             const GcnWeights& gcn_cooc, const GcnWeights& gcn_sim,
                             const Tensor& neg_w, const PriorCachePolicy& policy);

void save_prior_cache(const PriorCache& cache, const std::string& path);
PriorCache load_prior_cache(const std::string& path);

}  // namespace kamg
