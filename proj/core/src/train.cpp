#include "kamg/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "kamg/errors.hpp"

namespace kamg {

void LossCurve::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << "step\tloss\n";
  char buf[64];
  for (const auto& [step, loss] : points) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.17g\n", static_cast<long long>(step), loss);
    f << buf;
  }
}

AdamOptimizer::AdamOptimizer(const ParamStore& params, std::vector<std::string> names,
                             double beta1, double beta2, double eps)
    : names_(std::move(names)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(names_.size());
  v_.reserve(names_.size());
  for (const auto& name : names_) {
    m_.emplace_back(params.get(name).shape());
    v_.emplace_back(params.get(name).shape());
  }
}

void AdamOptimizer::step(ParamStore& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != names_.size()) {
    throw ContractError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(names_.size()) + " parameters");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t p = 0; p < names_.size(); ++p) {
    Tensor& theta = params.get(names_[p]);
    const Tensor& g = grads[p];
    if (!theta.same_shape(g)) {
      throw ContractError("gradient shape " + shape_str(g) + " != parameter shape " +
                          shape_str(theta) + " for " + names_[p]);
    }
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (int64_t i = 0; i < theta.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

namespace {

struct BatchItem {
  size_t grid_index;
  MaskState mask;
};

struct ItemResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

// One independent forward/backward pass; pure given its inputs.
ItemResult run_item(const ParamStore& params, const ModelConfig& cfg, const Corpus& train,
                    const PriorOperators* ops, Phase phase, const BatchItem& item,
                    const std::vector<std::string>& trainable) {
  const TokenGrid& grid = train.grids[item.grid_index];
  Tape tape;
  TapeBinding bound = bind_params(tape, params, trainable);
  PriorNodes nodes;
  const PriorNodes* prior_ptr = nullptr;
  if (phase == Phase::kFinetuneKa) {
    nodes = build_prior_nodes(tape, bound, *ops, grid.class_label);
    prior_ptr = &nodes;
  }
  Tape::NodeId logits =
      model_forward(tape, cfg, bound, grid.tokens, item.mask, grid.class_label, prior_ptr);
  Tape::NodeId loss = masked_nll_loss(tape, cfg, logits, grid.tokens, item.mask);
  tape.backward(loss);

  ItemResult r;
  r.loss = tape.value(loss).scalar_value();
  r.grads.reserve(trainable.size());
  for (const auto& name : trainable) r.grads.push_back(tape.release_grad(bound.at(name)));
  return r;
}

LossCurve train_loop(ParamStore& params, const ModelConfig& cfg, const Corpus& train,
                     const PriorOperators* ops, Phase phase, const TrainConfig& tc) {
  if (train.grids.empty()) throw DataError("training corpus is empty");
  if (tc.batch_size < 1 || tc.steps < 0) throw ConfigError("bad training configuration");
  if (phase == Phase::kFinetuneKa && ops == nullptr) {
    throw ContractError("KA fine-tuning requires prior operators");
  }

  const std::vector<std::string> trainable = trainable_param_names(cfg, phase);
  for (const auto& name : trainable) params.get(name);  // fail fast on missing params

  AdamOptimizer adam(params, trainable);
  Rng rng(tc.seed);
  const int64_t n = cfg.grid_len();
  LossCurve curve;

  for (int64_t step = 0; step < tc.steps; ++step) {
    // All stochastic choices are drawn serially up front so the batch items
    // are pure functions and thread scheduling cannot change results.
    std::vector<BatchItem> batch;
    batch.reserve(static_cast<size_t>(tc.batch_size));
    for (int64_t b = 0; b < tc.batch_size; ++b) {
      BatchItem item;
      item.grid_index = static_cast<size_t>(rng.below(train.grids.size()));
      item.mask = sample_mask(n, rng);
      batch.push_back(std::move(item));
    }

    std::vector<ItemResult> results(batch.size());
    const int threads = std::max(1, std::min<int>(tc.num_threads, static_cast<int>(batch.size())));
    if (threads == 1) {
      for (size_t b = 0; b < batch.size(); ++b) {
        results[b] = run_item(params, cfg, train, ops, phase, batch[b], trainable);
      }
    } else {
      std::vector<std::thread> workers;
      for (int w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
          for (size_t b = static_cast<size_t>(w); b < batch.size(); b += static_cast<size_t>(threads)) {
            results[b] = run_item(params, cfg, train, ops, phase, batch[b], trainable);
          }
        });
      }
      for (auto& t : workers) t.join();
    }

    // Gradients summed in item order: bit-identical to the serial pass.
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<Tensor> grads = std::move(results[0].grads);
    loss += results[0].loss;
    for (size_t b = 1; b < results.size(); ++b) {
      loss += results[b].loss;
      for (size_t p = 0; p < grads.size(); ++p) {
        Tensor& acc = grads[p];
        const Tensor& g = results[b].grads[p];
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
      }
    }
    loss *= inv_b;
    for (auto& g : grads) {
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= inv_b;
    }

    if (!std::isfinite(loss)) {
      throw NumericError("training diverged at step " + std::to_string(step) + " (" +
                         phase_name(phase) + "): loss is not finite");
    }

    const double warm =
        tc.warmup_steps > 0
            ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(tc.warmup_steps))
            : 1.0;
    adam.step(params, grads, tc.learning_rate * warm);

    if (step == 0 || (step + 1) % tc.log_every == 0 || step + 1 == tc.steps) {
      curve.points.emplace_back(step + 1, loss);
      if (tc.verbose) {
        std::printf("[%s] step %lld/%lld loss %.5f\n", phase_name(phase).c_str(),
                    static_cast<long long>(step + 1), static_cast<long long>(tc.steps), loss);
        std::fflush(stdout);
      }
    }
  }
  return curve;
}

}  // namespace

LossCurve pretrain_backbone(ParamStore& params, const ModelConfig& cfg, const Corpus& train,
                            const TrainConfig& tc) {
  return train_loop(params, cfg, train, nullptr, Phase::kPretrain, tc);
}

LossCurve finetune(ParamStore& params, const ModelConfig& cfg, const Corpus& train,
                   const PriorOperators* ops, Phase phase, const TrainConfig& tc) {
  if (phase == Phase::kPretrain) throw ContractError("finetune called with pretrain phase");
  return train_loop(params, cfg, train, ops, phase, tc);
}

}  // namespace kamg
