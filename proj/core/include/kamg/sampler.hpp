#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kamg/corpus.hpp"
#include "kamg/model.hpp"

namespace kamg {

// Unmasking plan: keep_counts[t] positions are fixed at step t+1; counts sum
// to the grid length and the masked count is strictly decreasing.
struct DecodeSchedule {
  int64_t total_positions = 0;
  std::vector<int64_t> keep_counts;

  // Masked count after step t is floor(N cos(pi t / 2T)), adjusted so the
  // sequence is strictly decreasing and hits zero at t = T.
  static DecodeSchedule cosine(int64_t n, int64_t steps);

  std::vector<int64_t> masked_after() const;
  int64_t steps() const { return static_cast<int64_t>(keep_counts.size()); }
};

struct DecodeStep {
  int64_t masked_before = 0;
  double mean_confidence = 0.0;           // over this step's kept positions
  std::vector<int64_t> masked_positions;  // candidates, ascending position
  std::vector<uint16_t> sampled_tokens;   // per candidate
  std::vector<double> confidences;        // per candidate
  std::vector<int64_t> kept_positions;    // subset fixed this step, best first
};

struct DecodeTrace {
  std::vector<DecodeStep> steps;
};

// Iterative parallel decoding: start fully masked; each step samples a token
// per masked position from softmax(logits / temperature) (argmax at zero
// temperature), then keeps the k_t highest-confidence positions (ties go to
// the lower index). Pure function of (model, class, schedule, temperature, seed).
std::pair<TokenGrid, DecodeTrace> decode(const InferenceModel& model, uint32_t cls,
                                         const DecodeSchedule& schedule, double temperature,
                                         uint64_t seed);

// Independent decodes with per-item derived seeds.
std::vector<TokenGrid> decode_batch(const InferenceModel& model,
                                    const std::vector<uint32_t>& classes,
                                    const DecodeSchedule& schedule, double temperature,
                                    uint64_t seed, int num_threads = 1);

void write_trace(const DecodeTrace& trace, const std::string& path);

}  // namespace kamg
