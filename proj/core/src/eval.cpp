#include "kamg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "kamg/errors.hpp"

namespace kamg {

void EvalReport::write_kv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  char buf[96];
  f << "metric=" << metric << "\n";
  std::snprintf(buf, sizeof(buf), "value=%.17g\n", value);
  f << buf;
  f << "seed=" << seed << "\n";
  f << "config_digest=" << config_digest << "\n";
  f << "corpus_digest=" << corpus_digest << "\n";
  for (const auto& [key, v] : extras) {
    std::snprintf(buf, sizeof(buf), "%s=%.17g\n", key.c_str(), v);
    f << buf;
  }
}

namespace {

int64_t mask_count_for(double ratio, int64_t n) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("mask ratio must be in (0,1), got " + std::to_string(ratio));
  }
  return std::max<int64_t>(1, static_cast<int64_t>(std::ceil(ratio * static_cast<double>(n))));
}

MaskState eval_mask(int64_t n, int64_t count, uint64_t seed, size_t grid_index) {
  Rng rng(Rng::derive(seed, grid_index));
  return sample_mask_exact(n, count, rng);
}

double row_nll(const Tensor& logits, int64_t row, uint16_t target) {
  const int64_t k = logits.cols();
  const double* z = logits.data() + row * k;
  double m = z[0];
  for (int64_t j = 1; j < k; ++j) m = std::max(m, z[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < k; ++j) sum += std::exp(z[j] - m);
  return m + std::log(sum) - z[target];
}

void softmax_row(const Tensor& logits, int64_t row, std::vector<double>& out) {
  const int64_t k = logits.cols();
  const double* z = logits.data() + row * k;
  out.resize(static_cast<size_t>(k));
  double m = z[0];
  for (int64_t j = 1; j < k; ++j) m = std::max(m, z[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < k; ++j) {
    out[static_cast<size_t>(j)] = std::exp(z[j] - m);
    sum += out[static_cast<size_t>(j)];
  }
  for (int64_t j = 0; j < k; ++j) out[static_cast<size_t>(j)] /= sum;
}

}  // namespace

int64_t logit_rank_pessimistic(const Tensor& logits, int64_t row, uint16_t target) {
  const int64_t k = logits.cols();
  const double* z = logits.data() + row * k;
  const double zt = z[target];
  int64_t rank = 1;
  for (int64_t j = 0; j < k; ++j) {
    if (j == target) continue;
    if (z[j] >= zt) ++rank;
  }
  return rank;
}

double masked_nll(const InferenceModel& model, const Corpus& corpus, double mask_ratio,
                  uint64_t seed) {
  if (corpus.grids.empty()) throw DataError("masked_nll: empty corpus");
  const int64_t n = model.config->grid_len();
  const int64_t count = mask_count_for(mask_ratio, n);
  double total = 0.0;
  for (size_t gi = 0; gi < corpus.grids.size(); ++gi) {
    const TokenGrid& grid = corpus.grids[gi];
    const MaskState mask = eval_mask(n, count, seed, gi);
    const Tensor logits = model.logits(grid.tokens, mask, grid.class_label);
    double nll = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      if (mask.masked[static_cast<size_t>(i)]) {
        nll += row_nll(logits, i, grid.tokens[static_cast<size_t>(i)]);
      }
    }
    total += nll / static_cast<double>(mask.masked_count);
  }
  return total / static_cast<double>(corpus.grids.size());
}

double ndcg_at_k(const InferenceModel& model, const Corpus& corpus, double mask_ratio, int64_t k,
                 uint64_t seed) {
  if (corpus.grids.empty()) throw DataError("ndcg_at_k: empty corpus");
  if (k < 1) throw ConfigError("ndcg k must be >= 1");
  const int64_t n = model.config->grid_len();
  const int64_t count = mask_count_for(mask_ratio, n);
  double gain = 0.0;
  int64_t positions = 0;
  for (size_t gi = 0; gi < corpus.grids.size(); ++gi) {
    const TokenGrid& grid = corpus.grids[gi];
    const MaskState mask = eval_mask(n, count, seed, gi);
    const Tensor logits = model.logits(grid.tokens, mask, grid.class_label);
    for (int64_t i = 0; i < n; ++i) {
      if (!mask.masked[static_cast<size_t>(i)]) continue;
      const int64_t rank = logit_rank_pessimistic(logits, i, grid.tokens[static_cast<size_t>(i)]);
      if (rank <= k) gain += 1.0 / std::log2(1.0 + static_cast<double>(rank));
      ++positions;
    }
  }
  return gain / static_cast<double>(positions);
}

std::vector<RankingComparison> compare_ranking(const InferenceModel& baseline,
                                               const InferenceModel& ka, const Corpus& corpus,
                                               const std::vector<double>& mask_ratios, int64_t k,
                                               uint64_t seed) {
  std::vector<RankingComparison> out;
  for (double ratio : mask_ratios) {
    RankingComparison c;
    c.mask_ratio = ratio;
    c.ndcg_baseline = ndcg_at_k(baseline, corpus, ratio, k, seed);
    c.ndcg_ka = ndcg_at_k(ka, corpus, ratio, k, seed);
    c.delta = c.ndcg_ka - c.ndcg_baseline;
    out.push_back(c);
  }
  return out;
}

RobustnessReport replacement_robustness(const InferenceModel& model, const SimGraph& sim,
                                        const Corpus& corpus, uint64_t seed,
                                        int64_t num_replacements) {
  if (corpus.grids.empty()) throw DataError("replacement_robustness: empty corpus");
  const ModelConfig& cfg = *model.config;
  const int64_t n = cfg.grid_len();
  const int64_t h = cfg.height, w = cfg.width;

  RobustnessReport report;
  Rng rng(seed);
  std::vector<double> p_orig, p_mod;

  for (int64_t r = 0; r < num_replacements; ++r) {
    const TokenGrid& grid = corpus.grids[static_cast<size_t>(rng.below(corpus.grids.size()))];
    const int64_t pos = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
    const uint16_t original = grid.tokens[static_cast<size_t>(pos)];
    if (sim.edges[original].empty()) {
      ++report.skipped;
      continue;
    }
    const uint16_t top1 = static_cast<uint16_t>(sim.edges[original][0].target);
    const uint16_t worst = static_cast<uint16_t>(sim.farthest[original].target);

    // mask the 8-neighbourhood, keep the replaced cell visible
    MaskState mask;
    mask.masked.assign(static_cast<size_t>(n), 0);
    const int64_t row = pos / w, col = pos % w;
    std::vector<int64_t> neighbours;
    for (int64_t dr = -1; dr <= 1; ++dr) {
      for (int64_t dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int64_t rr = row + dr, cc = col + dc;
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        neighbours.push_back(rr * w + cc);
        mask.masked[static_cast<size_t>(rr * w + cc)] = 1;
      }
    }
    if (neighbours.empty()) {
      ++report.skipped;
      continue;
    }
    mask.masked_count = static_cast<int64_t>(neighbours.size());

    const Tensor base_logits = model.logits(grid.tokens, mask, grid.class_label);
    auto mean_tv = [&](uint16_t replacement) {
      std::vector<uint16_t> tokens = grid.tokens;
      tokens[static_cast<size_t>(pos)] = replacement;
      const Tensor mod_logits = model.logits(tokens, mask, grid.class_label);
      double tv_sum = 0.0;
      for (int64_t nb : neighbours) {
        softmax_row(base_logits, nb, p_orig);
        softmax_row(mod_logits, nb, p_mod);
        double tv = 0.0;
        for (size_t j = 0; j < p_orig.size(); ++j) tv += std::fabs(p_orig[j] - p_mod[j]);
        tv_sum += 0.5 * tv;
      }
      return tv_sum / static_cast<double>(neighbours.size());
    };

    const double d_top1 = mean_tv(top1);
    const double d_worst = mean_tv(worst);
    report.pairs.emplace_back(d_top1, d_worst);
    report.delta_top1_mean += d_top1;
    report.delta_worst_mean += d_worst;
    ++report.replacements;
  }
  if (report.replacements > 0) {
    report.delta_top1_mean /= static_cast<double>(report.replacements);
    report.delta_worst_mean /= static_cast<double>(report.replacements);
  }
  return report;
}

CostReport CostReport::compute(const ModelConfig& cfg, double mean_incompat_set_size) {
  const int64_t d = cfg.dim;
  const int64_t k = cfg.codebook_size;
  const int64_t n = cfg.grid_len();
  CostReport r;
  r.fusion_params = cfg.num_layers * 2 * (d * d + d);
  r.gcn_params = 2 * 3 * (d * d + d);
  r.neg_w_params = d * d;
  r.cache_values_per_graph = k * d;
  r.cache_values_total = 2 * k * d;
  r.per_class_neg_values = static_cast<int64_t>(cfg.num_classes) * n * d;
  r.online_neg_macs_per_class =
      mean_incompat_set_size * static_cast<double>(d) + static_cast<double>(n) * d * d;
  return r;
}

std::map<std::string, double> CostReport::as_map() const {
  return {
      {"fusion_params", static_cast<double>(fusion_params)},
      {"gcn_params", static_cast<double>(gcn_params)},
      {"neg_w_params", static_cast<double>(neg_w_params)},
      {"cache_values_per_graph", static_cast<double>(cache_values_per_graph)},
      {"cache_values_total", static_cast<double>(cache_values_total)},
      {"per_class_neg_values", static_cast<double>(per_class_neg_values)},
      {"online_neg_macs_per_class", online_neg_macs_per_class},
  };
}

double sign_test_pvalue(int64_t successes, int64_t trials) {
  if (trials <= 0) return 1.0;
  if (successes < 0 || successes > trials) throw ContractError("bad sign test arguments");
  // P(X >= successes), X ~ Binomial(trials, 1/2), via log terms for stability
  double p = 0.0;
  for (int64_t x = successes; x <= trials; ++x) {
    double log_c = 0.0;
    for (int64_t i = 0; i < x; ++i) {
      log_c += std::log(static_cast<double>(trials - i)) - std::log(static_cast<double>(i + 1));
    }
    p += std::exp(log_c - static_cast<double>(trials) * std::log(2.0));
  }
  return std::min(1.0, p);
}

}  // namespace kamg
