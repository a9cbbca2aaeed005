// End-to-end pipeline runs against the installed CLI binary. A deliberately
// tiny corpus and model keep the whole sweep to a few seconds.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "kamg/corpus.hpp"
#include "kamg/digest.hpp"

using namespace kamg;
namespace fs = std::filesystem;

#ifndef KAMG_CLI_PATH
#error "KAMG_CLI_PATH must point at the pipeline binary"
#endif

namespace {

const std::string kOut = (fs::temp_directory_path() / "kamg_cli_pipeline").string();

std::string base_args() {
  return std::string(" -s out.dir=") + kOut +
         " -s synth.codebook_size=24 -s synth.height=4 -s synth.width=4"
         " -s synth.num_classes=2 -s synth.num_grids=300 -s synth.bands_per_class=2"
         " -s synth.synonyms_per_region=1 -s synth.seed=3"
         " -s mine.prune_min_count=2"
         " -s model.dim=32 -s model.layers=2 -s model.heads=2"
         " -s train.steps_pretrain=60 -s train.steps_finetune=30 -s train.batch_size=2"
         " -s train.warmup_steps=10 -s train.threads=2 -s train.log_every=50"
         " -s train.verbose=false"
         " -s sample.count=3 -s sample.steps=4 -s sample.class=1"
         " -s eval.replacements=12";
}

int run(const std::string& command_and_flags) {
  const std::string cmd = std::string(KAMG_CLI_PATH) + " " + command_and_flags + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli_pipeline") {
  TEST_CASE("full pipeline runs and is idempotent") {
    fs::remove_all(kOut);

    REQUIRE(run("synth" + base_args()) == 0);
    REQUIRE(fs::exists(kOut + "/corpus.kamg"));
    const uint64_t digest1 = file_digest(kOut + "/corpus.kamg");

    // identical config => byte-identical corpus
    REQUIRE(run("synth" + base_args()) == 0);
    CHECK(file_digest(kOut + "/corpus.kamg") == digest1);

    // a different seed changes the bytes
    REQUIRE(run("synth" + base_args() + " -s synth.seed=4") == 0);
    CHECK(file_digest(kOut + "/corpus.kamg") != digest1);
    REQUIRE(run("synth" + base_args()) == 0);

    REQUIRE(run("mine" + base_args()) == 0);
    CHECK(fs::exists(kOut + "/cooc.graph"));
    CHECK(fs::exists(kOut + "/sim.graph"));
    CHECK(fs::exists(kOut + "/incompat.graph"));
    const uint64_t cooc1 = file_digest(kOut + "/cooc.graph");
    REQUIRE(run("mine" + base_args()) == 0);
    CHECK(file_digest(kOut + "/cooc.graph") == cooc1);  // rerun -> identical graphs

    REQUIRE(run("train -p pretrain" + base_args()) == 0);
    CHECK(fs::exists(kOut + "/backbone.ckpt"));
    CHECK(fs::exists(kOut + "/backbone_loss.tsv"));

    REQUIRE(run("train -p baseline" + base_args()) == 0);
    CHECK(fs::exists(kOut + "/baseline.ckpt"));

    REQUIRE(run("train -p finetune" + base_args()) == 0);
    CHECK(fs::exists(kOut + "/ka.ckpt"));
    CHECK(fs::exists(kOut + "/prior.cache"));

    REQUIRE(run("sample" + base_args()) == 0);
    const Corpus samples = read_corpus(kOut + "/samples.kamg");
    CHECK(samples.header.num_grids == 3);
    for (const auto& g : samples.grids) {
      CHECK(g.class_label == 1);
      for (uint16_t t : g.tokens) CHECK(t < samples.header.codebook_size);
    }
    CHECK(fs::exists(kOut + "/samples_trace.txt"));

    REQUIRE(run("eval -M nll" + base_args()) == 0);
    CHECK(fs::exists(kOut + "/eval_nll.txt"));
    REQUIRE(run("eval -M ndcg" + base_args()) == 0);
    REQUIRE(run("eval -M compare" + base_args()) == 0);
    CHECK(fs::exists(kOut + "/eval_compare.txt"));
    REQUIRE(run("eval -M robustness" + base_args()) == 0);

    REQUIRE(run("report" + base_args()) == 0);
    std::ifstream f(kOut + "/cost_report.txt");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("fusion_params") != std::string::npos);

    // resolved configs are written alongside outputs
    CHECK(fs::exists(kOut + "/resolved_synth.cfg"));
    CHECK(fs::exists(kOut + "/resolved_train_pretrain.cfg"));
  }

  TEST_CASE("exit codes distinguish config, data and usage errors") {
    // unknown config key -> 1
    CHECK(run("synth -s no.such.key=1") == 1);
    // missing corpus -> 2
    const std::string empty_dir = (fs::temp_directory_path() / "kamg_cli_empty").string();
    fs::remove_all(empty_dir);
    CHECK(run("mine -s out.dir=" + empty_dir) == 2);
    // fine-tuning before pretraining -> 2
    CHECK(run("train -p finetune -s out.dir=" + empty_dir) == 2);
    // bad metric name -> 1 (needs an existing pipeline)
    CHECK(run("eval -M nonsense" + base_args()) == 1);
  }
}
