#include <benchmark/benchmark.h>

#include "kamg/runtime.hpp"

#include "kamg/graphs.hpp"
#include "kamg/model.hpp"
#include "kamg/synthetic.hpp"
#include "kamg/train.hpp"

using namespace kamg;

namespace {

struct ToyPipeline {
  ModelConfig cfg;
  Corpus corpus;
  CoocGraph cooc;
  SimGraph sim;
  IncompatGraph incompat;
  PriorOperators ops;
  ParamStore params;

  ToyPipeline() {
    cfg.codebook_size = 256;
    cfg.height = 8;
    cfg.width = 8;
    cfg.num_classes = 4;
    cfg.dim = 128;
    cfg.num_layers = 4;
    cfg.num_heads = 4;
    corpus = generate_synthetic(make_band_layout(256, 8, 8, 4, 512, 7, 0.6, 2, 1));
    cooc = normalize_cooccurrence(mine_cooccurrence(corpus, 2));
    sim = mine_similarity(position_distribution(corpus, 1.0), 2);
    incompat = mine_incompatibility(corpus);
    ops = PriorOperators::build(cooc, sim, incompat);
    Rng rng(1);
    init_backbone(params, cfg, rng);
    init_ka_extras(params, cfg, rng);
  }
};

ToyPipeline& pipeline() {
  static ToyPipeline p;
  return p;
}

void BM_BackboneForward(benchmark::State& state) {
  auto& p = pipeline();
  const InferenceModel m{&p.cfg, &p.params, false, nullptr, nullptr};
  Rng rng(5);
  MaskState mask = sample_mask(p.cfg.grid_len(), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(m.logits(p.corpus.grids[0].tokens, mask, 0).data());
  }
}
BENCHMARK(BM_BackboneForward);

void BM_KaForward(benchmark::State& state) {
  auto& p = pipeline();
  const InferenceModel m{&p.cfg, &p.params, true, &p.ops, nullptr};
  Rng rng(5);
  MaskState mask = sample_mask(p.cfg.grid_len(), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(m.logits(p.corpus.grids[0].tokens, mask, 0).data());
  }
}
BENCHMARK(BM_KaForward);

void BM_PretrainStep(benchmark::State& state) {
  auto& p = pipeline();
  ParamStore params;
  Rng rng(2);
  init_backbone(params, p.cfg, rng);
  TrainConfig tc;
  tc.steps = 1;
  tc.batch_size = state.range(0);
  tc.num_threads = static_cast<int>(state.range(1));
  tc.log_every = 1000000;
  tc.seed = 3;
  for (auto _ : state) {
    pretrain_backbone(params, p.cfg, p.corpus, tc);
  }
}
BENCHMARK(BM_PretrainStep)->Args({1, 1})->Args({2, 2})->Args({4, 2})->Unit(benchmark::kMillisecond);

void BM_FinetuneKaStep(benchmark::State& state) {
  auto& p = pipeline();
  ParamStore params;
  Rng rng(2);
  init_backbone(params, p.cfg, rng);
  init_ka_extras(params, p.cfg, rng);
  TrainConfig tc;
  tc.steps = 1;
  tc.batch_size = state.range(0);
  tc.num_threads = static_cast<int>(state.range(1));
  tc.log_every = 1000000;
  tc.seed = 3;
  for (auto _ : state) {
    finetune(params, p.cfg, p.corpus, &p.ops, Phase::kFinetuneKa, tc);
  }
}
BENCHMARK(BM_FinetuneKaStep)->Args({2, 2})->Unit(benchmark::kMillisecond);

void BM_MineCooccurrence(benchmark::State& state) {
  auto& p = pipeline();
  for (auto _ : state) {
    benchmark::DoNotOptimize(mine_cooccurrence(p.corpus, 2, true, static_cast<int>(state.range(0))));
  }
  state.SetItemsProcessed(state.iterations() * p.corpus.grids.size());
}
BENCHMARK(BM_MineCooccurrence)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  kamg::tune_allocator_for_tensor_churn();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}
