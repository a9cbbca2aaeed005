#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kamg/corpus.hpp"
#include "kamg/model.hpp"

namespace kamg {

struct TrainConfig {
  int64_t steps = 10000;
  int64_t batch_size = 2;
  double learning_rate = 1e-3;
  int64_t warmup_steps = 100;  // linear ramp to the base rate
  uint64_t seed = 1;
  int num_threads = 1;  // batch items run as independent passes, summed in item order
  int64_t log_every = 200;
  bool verbose = false;
};

struct LossCurve {
  std::vector<std::pair<int64_t, double>> points;  // (step, batch-mean loss)

  void save(const std::string& path) const;
};

// Adam with bias correction; state tensors align with the trainable names.
class AdamOptimizer {
 public:
  AdamOptimizer(const ParamStore& params, std::vector<std::string> names, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step(ParamStore& params, const std::vector<Tensor>& grads, double lr);
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int64_t t_ = 0;
  double beta1_, beta2_, eps_;
};

// Masked-token pretraining of the backbone (no priors, no fusion).
LossCurve pretrain_backbone(ParamStore& params, const ModelConfig& cfg, const Corpus& train,
                            const TrainConfig& tc);

// Fine-tuning with a frozen backbone. kFinetuneKa trains the classification
// head, the fusion maps, both GCN encoders, the negative-prior matrix and the
// prior codebook; kFinetuneBaseline trains the classification head only.
// `ops` is required for the KA phase.
LossCurve finetune(ParamStore& params, const ModelConfig& cfg, const Corpus& train,
                   const PriorOperators* ops, Phase phase, const TrainConfig& tc);

}  // namespace kamg
