#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "kamg/config.hpp"
#include "kamg/errors.hpp"

using namespace kamg;
namespace fs = std::filesystem;

TEST_SUITE("config") {
  TEST_CASE("defaults resolve and dump deterministically") {
    RunConfig a, b;
    CHECK(a.resolved_text() == b.resolved_text());
    CHECK(a.digest() == b.digest());
    CHECK(a.unsigned64("synth.codebook_size") == 256);
    CHECK(a.real("model.alpha") == 1.0);
    CHECK(a.flag("mine.count_self_pairs"));
  }

  TEST_CASE("unknown keys are rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("synth.codebok_size", "64"), ConfigError);
    CHECK_THROWS_AS(cfg.str("nope"), ConfigError);
  }

  TEST_CASE("values are type checked at set time") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("model.dim", "banana"), ConfigError);
    CHECK_THROWS_AS(cfg.set("model.alpha", "1.5x"), ConfigError);
    CHECK_THROWS_AS(cfg.set("mine.count_self_pairs", "maybe"), ConfigError);
    cfg.set("model.dim", "64");
    CHECK(cfg.unsigned64("model.dim") == 64);
  }

  TEST_CASE("file loading with comments and overrides") {
    const std::string path = (fs::temp_directory_path() / "kamg_test_cfg.txt").string();
    {
      std::ofstream f(path);
      f << "# a comment\n";
      f << "synth.num_grids = 123   # trailing comment\n";
      f << "\n";
      f << "model.alpha = 0.5\n";
    }
    RunConfig cfg;
    cfg.load_file(path);
    CHECK(cfg.unsigned64("synth.num_grids") == 123);
    CHECK(cfg.real("model.alpha") == 0.5);
    cfg.set_pair("model.alpha=2.0");
    CHECK(cfg.real("model.alpha") == 2.0);
    CHECK_THROWS_AS(cfg.set_pair("no-equals-sign"), ConfigError);
    fs::remove(path);
  }

  TEST_CASE("bad file lines carry their line number") {
    const std::string path = (fs::temp_directory_path() / "kamg_test_badcfg.txt").string();
    {
      std::ofstream f(path);
      f << "synth.num_grids = 5\n";
      f << "this line is nonsense\n";
    }
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(cfg.load_file(path), doctest::Contains(":2"), ConfigError);
    fs::remove(path);
  }

  TEST_CASE("corpus path defaults into the output directory") {
    RunConfig cfg;
    cfg.set("out.dir", "/tmp/kamg_run");
    CHECK(cfg.corpus_path() == "/tmp/kamg_run/corpus.kamg");
    cfg.set("corpus.path", "/elsewhere/data.kamg");
    CHECK(cfg.corpus_path() == "/elsewhere/data.kamg");
  }

  TEST_CASE("synth config derives the band layout") {
    RunConfig cfg;
    cfg.set("synth.codebook_size", "64");
    cfg.set("synth.height", "4");
    cfg.set("synth.width", "4");
    cfg.set("synth.num_classes", "2");
    cfg.set("synth.bands_per_class", "2");
    cfg.set("synth.synonyms_per_region", "1");
    const SynthConfig sc = synth_from_config(cfg);
    CHECK(sc.regions.size() == 4);
    CHECK(sc.synonym_pairs.size() == 4);
  }

  TEST_CASE("explicit region syntax parses") {
    RunConfig cfg;
    cfg.set("synth.layout", "explicit");
    cfg.set("synth.codebook_size", "8");
    cfg.set("synth.height", "2");
    cfg.set("synth.width", "2");
    cfg.set("synth.num_classes", "1");
    cfg.set("synth.regions", "0:0,0,1,2:0-4 ; 0:1,0,1,2:4-8");
    cfg.set("synth.synonyms", "0-1 ; 4-5");
    const SynthConfig sc = synth_from_config(cfg);
    REQUIRE(sc.regions.size() == 2);
    CHECK(sc.regions[1].vocab_lo == 4);
    REQUIRE(sc.synonym_pairs.size() == 2);
    CHECK(sc.synonym_pairs[1].first == 4);

    cfg.set("synth.regions", "0:0,0,1,2:0-4");  // no longer tiles the grid
    CHECK_THROWS_AS(synth_from_config(cfg), ConfigError);
  }

  TEST_CASE("train and policy sections materialize") {
    RunConfig cfg;
    cfg.set("train.steps_finetune", "17");
    cfg.set("train.lr_finetune", "0.00025");
    const TrainConfig tc = train_from_config(cfg, Phase::kFinetuneKa);
    CHECK(tc.steps == 17);
    CHECK(tc.learning_rate == 0.00025);
    const TrainConfig pc = train_from_config(cfg, Phase::kPretrain);
    CHECK(pc.steps == 10000);

    cfg.set("prior.policy_neg", "precomputed");
    const PriorCachePolicy policy = policy_from_config(cfg);
    CHECK(policy.neg == PriorPolicy::kPrecomputed);
    cfg.set("prior.policy_neg", "sometimes");
    CHECK_THROWS_AS(policy_from_config(cfg), ConfigError);
  }
}
