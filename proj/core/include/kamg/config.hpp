#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kamg/model.hpp"
#include "kamg/synthetic.hpp"
#include "kamg/train.hpp"

namespace kamg {

// Flat key=value configuration with a fixed schema: unknown keys are
// rejected, defaults fill everything else, and the resolved state can be
// dumped verbatim so a run is reproducible from its config file alone.
class RunConfig {
 public:
  RunConfig();

  // '#' starts a comment; blank lines ignored; "key = value" per line.
  void load_file(const std::string& path);
  // Single "key=value" override (command line).
  void set_pair(const std::string& pair);
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  uint64_t unsigned64(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  std::string resolved_text() const;
  void write_resolved(const std::string& path) const;
  uint64_t digest() const;

  // Derived pipeline paths inside out.dir (corpus.path wins when set).
  std::string out_dir() const { return str("out.dir"); }
  std::string corpus_path() const;
  std::string path_in_outdir(const std::string& filename) const;

 private:
  struct Entry {
    std::string key;
    enum class Type { kString, kInt, kUint, kReal, kBool } type;
    std::string value;
  };
  Entry& find(const std::string& key);
  const Entry& find(const std::string& key) const;

  std::vector<Entry> entries_;  // schema order
};

// Build the generator settings from config ("bands" auto layout or explicit
// region/synonym lists).
SynthConfig synth_from_config(const RunConfig& cfg);

// Model dimensions come from the corpus header, architecture from config.
ModelConfig model_from_config(const RunConfig& cfg, const CorpusHeader& header);

TrainConfig train_from_config(const RunConfig& cfg, Phase phase);

PriorCachePolicy policy_from_config(const RunConfig& cfg);

}  // namespace kamg
