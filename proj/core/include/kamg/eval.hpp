#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kamg/corpus.hpp"
#include "kamg/graphs.hpp"
#include "kamg/model.hpp"

namespace kamg {

struct EvalReport {
  std::string metric;
  double value = 0.0;
  uint64_t seed = 0;
  std::string config_digest;
  std::string corpus_digest;
  std::map<std::string, double> extras;

  void write_kv(const std::string& path) const;
};

// Mean over grids of the mean masked NLL with exactly ceil(ratio * N)
// positions hidden per grid; masks derive from (seed, grid index) only, so
// paired model comparisons see identical masks.
double masked_nll(const InferenceModel& model, const Corpus& corpus, double mask_ratio,
                  uint64_t seed);

// Mean truncated gain 1/log2(1+rank) of the ground-truth token over all
// masked positions; ranks are pessimistic under logit ties.
double ndcg_at_k(const InferenceModel& model, const Corpus& corpus, double mask_ratio, int64_t k,
                 uint64_t seed);

struct RankingComparison {
  double mask_ratio = 0.0;
  double ndcg_baseline = 0.0;
  double ndcg_ka = 0.0;
  double delta = 0.0;  // ka - baseline
};

// Paired NDCG@k at each ratio with identical masks for both models.
std::vector<RankingComparison> compare_ranking(const InferenceModel& baseline,
                                               const InferenceModel& ka, const Corpus& corpus,
                                               const std::vector<double>& mask_ratios, int64_t k,
                                               uint64_t seed);

struct RobustnessReport {
  double delta_top1_mean = 0.0;
  double delta_worst_mean = 0.0;
  int64_t replacements = 0;
  int64_t skipped = 0;
  // per replacement: (top1 TV delta, worst TV delta) for sign tests
  std::vector<std::pair<double, double>> pairs;
};

// Token-level replacement study: swap one token occurrence for (a) its most
// similar and (b) its maximally JS-distant token, mask the 8-neighbourhood,
// and measure the total-variation shift of the model's predictions there.
RobustnessReport replacement_robustness(const InferenceModel& model, const SimGraph& sim,
                                        const Corpus& corpus, uint64_t seed,
                                        int64_t num_replacements);

// Closed-form parameter/compute accounting for the fusion stack, prior
// encoders and cache policies.
struct CostReport {
  int64_t fusion_params = 0;          // L * 2 * (d^2 + d)
  int64_t gcn_params = 0;             // 2 * 3 * (d^2 + d)
  int64_t neg_w_params = 0;           // d^2
  int64_t cache_values_per_graph = 0;  // K * d
  int64_t cache_values_total = 0;      // 2 K d
  int64_t per_class_neg_values = 0;    // num_classes * N * d
  double online_neg_macs_per_class = 0.0;  // mean incompatible-set size * d + N * d^2

  static CostReport compute(const ModelConfig& cfg, double mean_incompat_set_size);
  std::map<std::string, double> as_map() const;
};

// One-sided sign test: probability of >= successes under Binomial(n, 1/2).
double sign_test_pvalue(int64_t successes, int64_t trials);

// Rank of `target` in descending logit order for one row, counting every
// tied competitor as ranked ahead.
int64_t logit_rank_pessimistic(const Tensor& logits, int64_t row, uint16_t target);

}  // namespace kamg
