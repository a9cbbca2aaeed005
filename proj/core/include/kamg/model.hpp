#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kamg/autodiff.hpp"
#include "kamg/graphs.hpp"
#include "kamg/prior.hpp"
#include "kamg/rng.hpp"

namespace kamg {

struct ModelConfig {
  uint32_t codebook_size = 256;
  uint16_t height = 8;
  uint16_t width = 8;
  uint32_t num_classes = 4;
  int64_t dim = 128;
  int64_t num_layers = 4;
  int64_t num_heads = 4;
  double alpha = 1.0;              // strength of the subtractive injection
  bool separate_pos_maps = false;  // distinct additive maps for the two positive priors
  bool neg_on_unmasked = false;    // also subtract the negative prior at unmasked positions

  int64_t grid_len() const { return static_cast<int64_t>(height) * width; }
  int64_t mask_token() const { return codebook_size; }
  void validate() const;
};

// Binary mask over the grid; masked[i] == 1 means position i is hidden.
struct MaskState {
  std::vector<uint8_t> masked;
  int64_t masked_count = 0;
};

// Training draw: u ~ U(0,1), ratio cos(pi u / 2), ceil(ratio * n) positions
// uniformly without replacement, at least one.
MaskState sample_mask(int64_t n, Rng& rng);
// Exactly `count` masked positions, uniformly without replacement.
MaskState sample_mask_exact(int64_t n, int64_t count, Rng& rng);

// Named parameter tensors in a fixed registration order (checkpoints and
// optimizer state rely on the ordering being deterministic).
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return tensors_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }
  int64_t total_elements(const std::vector<std::string>& names) const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> tensors_;
};

enum class Phase { kPretrain, kFinetuneKa, kFinetuneBaseline };

std::string phase_name(Phase p);
Phase parse_phase(const std::string& s);

// Parameter groups. The backbone is everything the pretrain phase learns;
// the classification head is the only backbone part that stays trainable
// during fine-tuning; the KA extras are the prior encoders plus per-layer
// fusion maps.
std::vector<std::string> backbone_param_names(const ModelConfig& cfg);
std::vector<std::string> classifier_param_names();
std::vector<std::string> ka_param_names(const ModelConfig& cfg);
std::vector<std::string> trainable_param_names(const ModelConfig& cfg, Phase phase);
std::vector<std::string> frozen_param_names(const ModelConfig& cfg, Phase phase);

void init_backbone(ParamStore& params, const ModelConfig& cfg, Rng& rng);
// Prior codebook + GCN stacks + negative-prior matrix get small Gaussian
// init; every fusion map starts at exactly zero so the fused model is the
// identity extension of the backbone.
void init_ka_extras(ParamStore& params, const ModelConfig& cfg, Rng& rng);
bool has_ka_extras(const ParamStore& params);

// Node ids of parameters bound into a tape; only names in `trainable`
// request gradients.
struct TapeBinding {
  std::unordered_map<std::string, Tape::NodeId> ids;
  Tape::NodeId at(const std::string& name) const;
};
TapeBinding bind_params(Tape& tape, const ParamStore& params,
                        const std::vector<std::string>& trainable = {});

// Constant graph operators reused across forwards.
struct PriorOperators {
  SparseOperator cooc_prop;
  SparseOperator sim_prop;
  std::vector<SparseOperator> neg_selectors;  // one per class

  static PriorOperators build(const CoocGraph& cooc, const SimGraph& sim,
                              const IncompatGraph& incompat);
};

// Prior embeddings as tape nodes for one forward pass.
struct PriorNodes {
  Tape::NodeId cooc = -1;
  Tape::NodeId sim = -1;
  Tape::NodeId neg = -1;  // N x d for the conditioning class
};

// Everything computed in-tape from the bound KA parameters (training path;
// gradients flow into the encoders).
PriorNodes build_prior_nodes(Tape& tape, const TapeBinding& bound, const PriorOperators& ops,
                             uint32_t cls);
// Precomputed entries injected as constants per the cache policy; online
// entries still computed from the bound parameters.
PriorNodes cached_prior_nodes(Tape& tape, const PriorCache& cache, const TapeBinding& bound,
                              const PriorOperators* ops, uint32_t cls);

// Bidirectional transformer forward. Masked positions read the mask-token
// embedding; the class embedding is added to every position. When `priors`
// is non-null the per-layer fusion applies: additive maps of both positive
// prior lookups at unmasked positions, minus alpha times the negative map at
// masked positions. Returns the N x K logits node.
Tape::NodeId model_forward(Tape& tape, const ModelConfig& cfg, const TapeBinding& bound,
                           const std::vector<uint16_t>& tokens, const MaskState& mask,
                           uint32_t cls, const PriorNodes* priors = nullptr);

// Mean negative log-likelihood over masked positions only.
Tape::NodeId masked_nll_loss(Tape& tape, const ModelConfig& cfg, Tape::NodeId logits,
                             const std::vector<uint16_t>& targets, const MaskState& mask);

// Inference wrapper: binds parameters as constants and evaluates logits.
// KA fusion runs whenever the store carries KA extras and `use_ka` is set;
// precomputed cache entries are used when available.
struct InferenceModel {
  const ModelConfig* config = nullptr;
  const ParamStore* params = nullptr;
  bool use_ka = false;
  const PriorOperators* prior_ops = nullptr;
  const PriorCache* cache = nullptr;

  Tensor logits(const std::vector<uint16_t>& tokens, const MaskState& mask, uint32_t cls) const;
};

// Checkpoint: header (config, phase, seed) + named tensors in store order.
struct Checkpoint {
  ModelConfig config;
  std::string phase;
  uint64_t seed = 0;
  ParamStore params;
};
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a digest per tensor, keyed by name; the freeze contract compares these.
std::unordered_map<std::string, uint64_t> param_digests(const ParamStore& params,
                                                        const std::vector<std::string>& names);

}  // namespace kamg
