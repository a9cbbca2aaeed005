#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kamg/errors.hpp"
#include "kamg/eval.hpp"
#include "model_fixture.hpp"

using namespace kamg;
namespace fs = std::filesystem;
using testutil::TinyModelFixture;

TEST_SUITE("ranking") {
  TEST_CASE("pessimistic rank and truncated gain") {
    // logits: token 2 highest, then 0, then 1 and 3 tied, then 4
    const Tensor z = Tensor::from({1, 5}, {3.0, 1.0, 9.0, 1.0, 0.5});
    CHECK(logit_rank_pessimistic(z, 0, 2) == 1);
    CHECK(logit_rank_pessimistic(z, 0, 0) == 2);
    CHECK(logit_rank_pessimistic(z, 0, 1) == 4);  // tie with 3 counts against it
    CHECK(logit_rank_pessimistic(z, 0, 3) == 4);
    CHECK(logit_rank_pessimistic(z, 0, 4) == 5);

    // gains: rank 1 -> 1, rank 3 -> 1/log2(4) = 0.5, rank > k -> 0
    CHECK(1.0 / std::log2(1.0 + 1.0) == doctest::Approx(1.0));
    CHECK(1.0 / std::log2(1.0 + 3.0) == doctest::Approx(0.5));
  }

  TEST_CASE("ndcg is within [0,1] and equals 1 only for perfect ranking") {
    const TinyModelFixture f = TinyModelFixture::make(90);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    const double v = ndcg_at_k(m, f.corpus, 0.5, 100, 7);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  TEST_CASE("identical models give exactly zero delta") {
    const TinyModelFixture f = TinyModelFixture::make(91);
    const InferenceModel a{&f.cfg, &f.params, false, nullptr, nullptr};
    const InferenceModel b{&f.cfg, &f.params, false, nullptr, nullptr};
    const auto rows = compare_ranking(a, b, f.corpus, {0.3, 0.5}, 100, 11);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(r.delta == 0.0);
  }

  TEST_CASE("zero-init KA model gives exactly zero delta against its backbone") {
    const TinyModelFixture f = TinyModelFixture::make(92);
    const InferenceModel backbone{&f.cfg, &f.params, false, nullptr, nullptr};
    const InferenceModel ka{&f.cfg, &f.params, true, &f.ops, nullptr};
    const auto rows = compare_ranking(backbone, ka, f.corpus, {0.3, 0.5}, 100, 13);
    for (const auto& r : rows) CHECK(r.delta == 0.0);
  }
}

TEST_SUITE("masked_nll_metric") {
  TEST_CASE("an untrained model scores near ln K") {
    const TinyModelFixture f = TinyModelFixture::make(93);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    const double v = masked_nll(m, f.corpus, 0.5, 21);
    CHECK(std::abs(v - std::log(6.0)) < 0.1);  // K = 6
  }

  TEST_CASE("deterministic given the seed") {
    const TinyModelFixture f = TinyModelFixture::make(94);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    CHECK(masked_nll(m, f.corpus, 0.3, 5) == masked_nll(m, f.corpus, 0.3, 5));
    CHECK(ndcg_at_k(m, f.corpus, 0.3, 100, 5) == ndcg_at_k(m, f.corpus, 0.3, 100, 5));
  }

  TEST_CASE("bad mask ratio is rejected") {
    const TinyModelFixture f = TinyModelFixture::make(95);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    CHECK_THROWS_AS(masked_nll(m, f.corpus, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(masked_nll(m, f.corpus, 1.0, 1), ConfigError);
  }
}

TEST_SUITE("robustness_metric") {
  TEST_CASE("replacing a token with itself moves nothing") {
    const TinyModelFixture f = TinyModelFixture::make(96);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    // hand-built graph: every token's "most similar" and "farthest" token is
    // itself, so both probes are no-op replacements
    SimGraph self;
    self.codebook_size = f.cfg.codebook_size;
    self.grid_len = f.cfg.grid_len();
    self.top_k = 1;
    self.edges.resize(self.codebook_size);
    self.farthest.assign(self.codebook_size, {});
    for (uint32_t t = 0; t < self.codebook_size; ++t) {
      self.edges[t].push_back({t, 0.0});
      self.farthest[t] = {t, 0.0};
    }
    const auto rep = replacement_robustness(m, self, f.corpus, 3, 20);
    CHECK(rep.replacements == 20);
    CHECK(rep.delta_top1_mean == 0.0);
    CHECK(rep.delta_worst_mean == 0.0);
  }

  TEST_CASE("tokens without similarity edges are skipped and counted") {
    const TinyModelFixture f = TinyModelFixture::make(97);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    SimGraph empty;
    empty.codebook_size = f.cfg.codebook_size;
    empty.grid_len = f.cfg.grid_len();
    empty.top_k = 2;
    empty.edges.resize(empty.codebook_size);
    empty.farthest.assign(empty.codebook_size, {});
    const auto rep = replacement_robustness(m, empty, f.corpus, 3, 10);
    CHECK(rep.replacements == 0);
    CHECK(rep.skipped == 10);
  }

  TEST_CASE("deterministic given the seed") {
    const TinyModelFixture f = TinyModelFixture::make(98);
    const InferenceModel m{&f.cfg, &f.params, false, nullptr, nullptr};
    const auto a = replacement_robustness(m, f.sim, f.corpus, 17, 10);
    const auto b = replacement_robustness(m, f.sim, f.corpus, 17, 10);
    CHECK(a.delta_top1_mean == b.delta_top1_mean);
    CHECK(a.delta_worst_mean == b.delta_worst_mean);
  }
}

TEST_SUITE("cost_report") {
  TEST_CASE("storage accounting reproduces the published scales") {
    // K=1024, d=384: 0.79M cached values across the two positive graphs
    ModelConfig big;
    big.codebook_size = 1024;
    big.height = 16;
    big.width = 16;
    big.num_classes = 1000;
    big.dim = 384;
    big.num_layers = 24;
    big.num_heads = 8;
    const CostReport r = CostReport::compute(big, 100.0);
    CHECK(r.cache_values_per_graph == 393216);
    CHECK(r.cache_values_total == 786432);

    // classes=1000, N=256, d=768: ~196.6M stored values for per-class priors
    ModelConfig wide = big;
    wide.dim = 768;
    const CostReport r2 = CostReport::compute(wide, 100.0);
    CHECK(r2.per_class_neg_values == 196608000);
  }

  TEST_CASE("toy fusion parameter count") {
    ModelConfig toy;
    toy.codebook_size = 256;
    toy.height = 8;
    toy.width = 8;
    toy.num_classes = 4;
    toy.dim = 128;
    toy.num_layers = 4;
    toy.num_heads = 4;
    const CostReport r = CostReport::compute(toy, 0.0);
    CHECK(r.fusion_params == 132096);  // 4 * 2 * (128^2 + 128)
    CHECK(r.gcn_params == 2 * 3 * (128 * 128 + 128));
    CHECK(r.neg_w_params == 128 * 128);
  }

  TEST_CASE("formulas match the real parameter tensors exactly") {
    const TinyModelFixture f = TinyModelFixture::make(99);
    const CostReport r = CostReport::compute(f.cfg, 0.0);

    std::vector<std::string> fusion, gcn, neg;
    for (const auto& name : f.params.names()) {
      if (name.rfind("fusion.", 0) == 0) fusion.push_back(name);
      if (name.rfind("prior.gcn", 0) == 0) gcn.push_back(name);
      if (name == "prior.neg.w") neg.push_back(name);
    }
    CHECK(f.params.total_elements(fusion) == r.fusion_params);
    CHECK(f.params.total_elements(gcn) == r.gcn_params);
    CHECK(f.params.total_elements(neg) == r.neg_w_params);
    CHECK(f.params.get("prior.codebook").numel() == r.cache_values_per_graph);
  }

  TEST_CASE("online MAC estimate uses the mean incompatible-set size") {
    ModelConfig toy;
    toy.codebook_size = 16;
    toy.height = 2;
    toy.width = 2;
    toy.num_classes = 2;
    toy.dim = 8;
    toy.num_layers = 1;
    toy.num_heads = 1;
    const CostReport r = CostReport::compute(toy, 5.0);
    CHECK(r.online_neg_macs_per_class == doctest::Approx(5.0 * 8 + 4.0 * 64));
  }
}

TEST_SUITE("sign_test") {
  TEST_CASE("closed-form binomial tails") {
    CHECK(sign_test_pvalue(8, 8) == doctest::Approx(1.0 / 256.0));
    CHECK(sign_test_pvalue(0, 8) == doctest::Approx(1.0));
    CHECK(sign_test_pvalue(5, 5) == doctest::Approx(1.0 / 32.0));
    // 160 of 200 is astronomically significant
    CHECK(sign_test_pvalue(160, 200) < 1e-15);
  }
}

TEST_SUITE("eval_report") {
  TEST_CASE("key-value files carry metric, digests and extras") {
    EvalReport r;
    r.metric = "ndcg";
    r.value = 0.5;
    r.seed = 9;
    r.config_digest = "abc";
    r.corpus_digest = "def";
    r.extras["mask_ratio"] = 0.3;
    const std::string path = (fs::temp_directory_path() / "kamg_test_report.txt").string();
    r.write_kv(path);
    std::ifstream f(path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("metric=ndcg") != std::string::npos);
    CHECK(text.find("value=0.5") != std::string::npos);
    CHECK(text.find("config_digest=abc") != std::string::npos);
    CHECK(text.find("mask_ratio=0.2999") != std::string::npos);
    fs::remove(path);
  }
}
