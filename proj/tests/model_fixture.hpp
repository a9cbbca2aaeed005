#pragma once

// Tiny end-to-end fixture (d=8, L=2, N=4, K=6) used by the gradient checks
// and the fusion identity tests, with graphs mined from a real corpus so the
// prior encoders see realistic operators.

#include <vector>

#include "kamg/graphs.hpp"
#include "kamg/model.hpp"
#include "kamg/rng.hpp"
#include "oracle_ref.hpp"
#include "testutil.hpp"

namespace kamg::testutil {

struct TinyModelFixture {
  ModelConfig cfg;
  Corpus corpus;
  CoocGraph cooc;
  SimGraph sim;
  IncompatGraph incompat;
  PriorOperators ops;
  ParamStore params;
  std::vector<uint16_t> tokens;
  MaskState mask;
  uint32_t cls = 0;

  static TinyModelFixture make(uint64_t seed = 123, bool randomize_fusion = false) {
    TinyModelFixture f;
    f.cfg.codebook_size = 6;
    f.cfg.height = 2;
    f.cfg.width = 2;
    f.cfg.num_classes = 2;
    f.cfg.dim = 8;
    f.cfg.num_layers = 2;
    f.cfg.num_heads = 2;
    f.cfg.alpha = 1.0;

    Rng rng(seed);
    f.corpus.header.codebook_size = 6;
    f.corpus.header.height = 2;
    f.corpus.header.width = 2;
    f.corpus.header.num_classes = 2;
    f.corpus.header.num_grids = 24;
    for (int i = 0; i < 24; ++i) {
      TokenGrid g;
      g.class_label = static_cast<uint32_t>(rng.below(2));
      // keep token 5 out of class 0 so the incompatibility graph is non-trivial
      const uint32_t span = g.class_label == 0 ? 5 : 6;
      for (int j = 0; j < 4; ++j) g.tokens.push_back(static_cast<uint16_t>(rng.below(span)));
      f.corpus.grids.push_back(std::move(g));
    }

    f.cooc = normalize_cooccurrence(mine_cooccurrence(f.corpus, 1));
    f.sim = mine_similarity(position_distribution(f.corpus, 1.0), 2);
    f.incompat = mine_incompatibility(f.corpus);
    f.ops = PriorOperators::build(f.cooc, f.sim, f.incompat);

    Rng init_rng(seed + 1);
    init_backbone(f.params, f.cfg, init_rng);
    init_ka_extras(f.params, f.cfg, init_rng);
    if (randomize_fusion) {
      for (const auto& name : f.params.names()) {
        if (name.rfind("fusion.", 0) == 0) {
          Tensor& t = f.params.get(name);
          for (int64_t i = 0; i < t.numel(); ++i) t[i] = 0.05 * init_rng.gaussian();
        }
      }
    }

    f.tokens = {1, 4, 2, 0};
    f.mask.masked = {0, 1, 0, 1};
    f.mask.masked_count = 2;
    f.cls = 0;
    return f;
  }
};

// Finite-difference check of every trainable tensor for the given phase.
inline GradCheck check_model_gradients(const TinyModelFixture& f, Phase phase,
                                       double step = 1e-5) {
  const std::vector<std::string> trainable = trainable_param_names(f.cfg, phase);
  std::vector<Tensor> checked;
  checked.reserve(trainable.size());
  for (const auto& name : trainable) checked.push_back(f.params.get(name));

  auto build = [&](Tape& tape, const std::vector<Tape::NodeId>& ids) {
    TapeBinding bound;
    for (const auto& name : f.params.names()) {
      auto it = std::find(trainable.begin(), trainable.end(), name);
      if (it != trainable.end()) {
        bound.ids[name] = ids[static_cast<size_t>(it - trainable.begin())];
      } else {
        bound.ids[name] = tape.input(f.params.get(name), false);
      }
    }
    PriorNodes nodes;
    const PriorNodes* prior_ptr = nullptr;
    if (phase == Phase::kFinetuneKa) {
      nodes = build_prior_nodes(tape, bound, f.ops, f.cls);
      prior_ptr = &nodes;
    }
    const Tape::NodeId logits =
        model_forward(tape, f.cfg, bound, f.tokens, f.mask, f.cls, prior_ptr);
    return masked_nll_loss(tape, f.cfg, logits, f.tokens, f.mask);
  };
  return check_gradients(std::move(checked), build, step);
}

}  // namespace kamg::testutil
