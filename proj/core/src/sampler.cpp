#include "kamg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "kamg/errors.hpp"

namespace kamg {

DecodeSchedule DecodeSchedule::cosine(int64_t n, int64_t steps) {
  if (steps < 1 || steps > n) {
    throw ConfigError("decode steps " + std::to_string(steps) + " outside [1," +
                      std::to_string(n) + "]");
  }
  DecodeSchedule s;
  s.total_positions = n;
  int64_t prev = n;
  for (int64_t t = 1; t <= steps; ++t) {
    const double raw = static_cast<double>(n) *
                       std::cos(M_PI * static_cast<double>(t) / (2.0 * static_cast<double>(steps)));
    int64_t masked = static_cast<int64_t>(std::floor(raw));
    // keep at least one reveal per step and enough headroom for the tail
    masked = std::min(masked, prev - 1);
    masked = std::max(masked, steps - t);
    if (t == steps) masked = 0;
    s.keep_counts.push_back(prev - masked);
    prev = masked;
  }
  return s;
}

std::vector<int64_t> DecodeSchedule::masked_after() const {
  std::vector<int64_t> out;
  int64_t m = total_positions;
  for (int64_t k : keep_counts) {
    m -= k;
    out.push_back(m);
  }
  return out;
}

std::pair<TokenGrid, DecodeTrace> decode(const InferenceModel& model, uint32_t cls,
                                         const DecodeSchedule& schedule, double temperature,
                                         uint64_t seed) {
  const ModelConfig& cfg = *model.config;
  const int64_t n = cfg.grid_len();
  if (schedule.total_positions != n) {
    throw ContractError("schedule built for " + std::to_string(schedule.total_positions) +
                        " positions, model has " + std::to_string(n));
  }
  if (temperature < 0.0) throw ConfigError("temperature must be >= 0");

  Rng rng(seed);
  MaskState mask;
  mask.masked.assign(static_cast<size_t>(n), 1);
  mask.masked_count = n;
  TokenGrid grid;
  grid.class_label = cls;
  grid.tokens.assign(static_cast<size_t>(n), 0);

  DecodeTrace trace;
  const int64_t k = cfg.codebook_size;
  std::vector<double> probs(static_cast<size_t>(k));

  for (int64_t step = 0; step < schedule.steps(); ++step) {
    const Tensor logits = model.logits(grid.tokens, mask, cls);

    struct Candidate {
      double confidence;
      int64_t position;
      uint16_t token;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<size_t>(mask.masked_count));
    DecodeStep st;
    st.masked_before = mask.masked_count;
    for (int64_t i = 0; i < n; ++i) {
      if (!mask.masked[static_cast<size_t>(i)]) continue;
      const double* row = logits.data() + i * k;
      uint16_t token;
      double conf;
      if (temperature == 0.0) {
        int64_t best = 0;
        for (int64_t j = 1; j < k; ++j) {
          if (row[j] > row[best]) best = j;  // ties keep the lower token id
        }
        token = static_cast<uint16_t>(best);
        conf = 1.0;
      } else {
        double m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < k; ++j) {
          probs[static_cast<size_t>(j)] = std::exp((row[j] - m) / temperature);
          z += probs[static_cast<size_t>(j)];
        }
        const double u = rng.uniform() * z;
        double acc = 0.0;
        int64_t pick = k - 1;
        for (int64_t j = 0; j < k; ++j) {
          acc += probs[static_cast<size_t>(j)];
          if (u < acc) {
            pick = j;
            break;
          }
        }
        token = static_cast<uint16_t>(pick);
        conf = probs[static_cast<size_t>(pick)] / z;
      }
      candidates.push_back({conf, i, token});
      st.masked_positions.push_back(i);
      st.sampled_tokens.push_back(token);
      st.confidences.push_back(conf);
    }

    // highest confidence first; ties resolved by lower position index
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.position < b.position;
    });

    const int64_t keep = schedule.keep_counts[static_cast<size_t>(step)];
    for (int64_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[static_cast<size_t>(i)];
      grid.tokens[static_cast<size_t>(c.position)] = c.token;
      mask.masked[static_cast<size_t>(c.position)] = 0;
      st.kept_positions.push_back(c.position);
      st.mean_confidence += c.confidence;
    }
    mask.masked_count -= keep;
    st.mean_confidence /= static_cast<double>(keep);
    trace.steps.push_back(std::move(st));
  }
  return {std::move(grid), std::move(trace)};
}

std::vector<TokenGrid> decode_batch(const InferenceModel& model,
                                    const std::vector<uint32_t>& classes,
                                    const DecodeSchedule& schedule, double temperature,
                                    uint64_t seed, int num_threads) {
  std::vector<TokenGrid> out(classes.size());
  const int threads = std::max(1, std::min<int>(num_threads, static_cast<int>(classes.size())));
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < classes.size(); i += stride) {
      out[i] = decode(model, classes[i], schedule, temperature, Rng::derive(seed, i)).first;
    }
  };
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> workers;
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back(work, static_cast<size_t>(w), static_cast<size_t>(threads));
    }
    for (auto& t : workers) t.join();
  }
  return out;
}

void write_trace(const DecodeTrace& trace, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  char buf[128];
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const DecodeStep& s = trace.steps[t];
    std::snprintf(buf, sizeof(buf), "step\t%zu\tmasked_before\t%lld\tkept\t%zu\tmean_conf\t%.6f\n",
                  t + 1, static_cast<long long>(s.masked_before), s.kept_positions.size(),
                  s.mean_confidence);
    f << buf;
    for (size_t i = 0; i < s.masked_positions.size(); ++i) {
      const bool kept = std::find(s.kept_positions.begin(), s.kept_positions.end(),
                                  s.masked_positions[i]) != s.kept_positions.end();
      std::snprintf(buf, sizeof(buf), "%s\t%lld\t%u\t%.6f\n", kept ? "keep" : "drop",
                    static_cast<long long>(s.masked_positions[i]),
                    static_cast<unsigned>(s.sampled_tokens[i]), s.confidences[i]);
      f << buf;
    }
  }
}

}  // namespace kamg
