#include "kamg/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "kamg/digest.hpp"
#include "kamg/errors.hpp"

namespace kamg {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  using T = Entry::Type;
  auto add = [this](const char* key, T type, const char* value) {
    entries_.push_back({key, type, value});
  };

  add("out.dir", T::kString, "out");
  add("corpus.path", T::kString, "");
  add("corpus.heldout_fraction", T::kReal, "0.1");
  add("corpus.split_seed", T::kUint, "42");

  add("synth.codebook_size", T::kUint, "256");
  add("synth.height", T::kUint, "8");
  add("synth.width", T::kUint, "8");
  add("synth.num_classes", T::kUint, "4");
  add("synth.num_grids", T::kUint, "5000");
  add("synth.seed", T::kUint, "7");
  add("synth.horizontal_coherence", T::kReal, "0.6");
  add("synth.layout", T::kString, "bands");
  add("synth.bands_per_class", T::kUint, "2");
  add("synth.synonyms_per_region", T::kUint, "1");
  add("synth.regions", T::kString, "");
  add("synth.synonyms", T::kString, "");

  add("mine.prune_min_count", T::kUint, "0");  // 0 -> max(2, 1e-7 * total pairs)
  add("mine.count_self_pairs", T::kBool, "true");
  add("mine.smoothing_epsilon", T::kReal, "1.0");
  add("mine.top_k", T::kUint, "2");
  add("mine.threads", T::kUint, "2");

  add("model.dim", T::kUint, "128");
  add("model.layers", T::kUint, "4");
  add("model.heads", T::kUint, "4");
  add("model.alpha", T::kReal, "1.0");
  add("model.separate_pos_maps", T::kBool, "false");
  add("model.neg_on_unmasked", T::kBool, "false");

  add("train.steps_pretrain", T::kUint, "10000");
  add("train.steps_finetune", T::kUint, "5000");
  add("train.batch_size", T::kUint, "2");
  add("train.lr_pretrain", T::kReal, "0.001");
  add("train.lr_finetune", T::kReal, "0.0001");
  add("train.warmup_steps", T::kUint, "100");
  add("train.seed", T::kUint, "1");
  add("train.threads", T::kUint, "2");
  add("train.log_every", T::kUint, "200");
  add("train.verbose", T::kBool, "true");

  add("prior.policy_cooc", T::kString, "precomputed");
  add("prior.policy_sim", T::kString, "precomputed");
  add("prior.policy_neg", T::kString, "online");

  add("sample.steps", T::kUint, "8");
  add("sample.temperature", T::kReal, "1.0");
  add("sample.count", T::kUint, "16");
  add("sample.class", T::kUint, "0");
  add("sample.seed", T::kUint, "99");
  add("sample.trace", T::kBool, "true");

  add("eval.mask_ratio", T::kReal, "0.5");
  add("eval.ndcg_k", T::kUint, "100");
  add("eval.seed", T::kUint, "1234");
  add("eval.replacements", T::kUint, "100");
}

RunConfig::Entry& RunConfig::find(const std::string& key) {
  for (auto& e : entries_) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

const RunConfig::Entry& RunConfig::find(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  Entry& e = find(key);
  const std::string v = trim(value);
  // type check now so errors point at the config, not a later use site
  try {
    switch (e.type) {
      case Entry::Type::kInt:
      case Entry::Type::kUint: {
        size_t pos = 0;
        (void)std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        if (e.type == Entry::Type::kUint && v.starts_with("-")) throw std::invalid_argument(v);
        break;
      }
      case Entry::Type::kReal: {
        size_t pos = 0;
        (void)std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        break;
      }
      case Entry::Type::kBool:
        if (v != "true" && v != "false" && v != "0" && v != "1") throw std::invalid_argument(v);
        break;
      case Entry::Type::kString:
        break;
    }
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + v + "' for key '" + key + "'");
  }
  e.value = v;
}

void RunConfig::set_pair(const std::string& pair) {
  const size_t eq = pair.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + pair + "' is not of the form key=value");
  }
  set(trim(pair.substr(0, eq)), pair.substr(eq + 1));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& err) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + err.what());
    }
  }
}

std::string RunConfig::str(const std::string& key) const { return find(key).value; }

int64_t RunConfig::integer(const std::string& key) const {
  return std::stoll(find(key).value);
}

uint64_t RunConfig::unsigned64(const std::string& key) const {
  return std::stoull(find(key).value);
}

double RunConfig::real(const std::string& key) const { return std::stod(find(key).value); }

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = find(key).value;
  return v == "true" || v == "1";
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& e : entries_) os << e.key << " = " << e.value << "\n";
  return os.str();
}

void RunConfig::write_resolved(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << resolved_text();
}

uint64_t RunConfig::digest() const { return fnv1a64(resolved_text()); }

std::string RunConfig::corpus_path() const {
  const std::string p = str("corpus.path");
  return p.empty() ? path_in_outdir("corpus.kamg") : p;
}

std::string RunConfig::path_in_outdir(const std::string& filename) const {
  return out_dir() + "/" + filename;
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(trim(s.substr(start)));
      break;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

uint16_t parse_u16(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    const unsigned long v = std::stoul(s, &pos);
    if (pos != s.size() || v > 65535) throw std::invalid_argument(s);
    return static_cast<uint16_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("bad ") + what + " '" + s + "'");
  }
}

}  // namespace

SynthConfig synth_from_config(const RunConfig& cfg) {
  const std::string layout = cfg.str("synth.layout");
  if (layout == "bands") {
    return make_band_layout(static_cast<uint32_t>(cfg.unsigned64("synth.codebook_size")),
                            static_cast<uint16_t>(cfg.unsigned64("synth.height")),
                            static_cast<uint16_t>(cfg.unsigned64("synth.width")),
                            static_cast<uint32_t>(cfg.unsigned64("synth.num_classes")),
                            cfg.unsigned64("synth.num_grids"), cfg.unsigned64("synth.seed"),
                            cfg.real("synth.horizontal_coherence"),
                            static_cast<uint32_t>(cfg.unsigned64("synth.bands_per_class")),
                            static_cast<uint32_t>(cfg.unsigned64("synth.synonyms_per_region")));
  }
  if (layout != "explicit") {
    throw ConfigError("synth.layout must be bands|explicit, got '" + layout + "'");
  }

  SynthConfig c;
  c.codebook_size = static_cast<uint32_t>(cfg.unsigned64("synth.codebook_size"));
  c.height = static_cast<uint16_t>(cfg.unsigned64("synth.height"));
  c.width = static_cast<uint16_t>(cfg.unsigned64("synth.width"));
  c.num_classes = static_cast<uint32_t>(cfg.unsigned64("synth.num_classes"));
  c.num_grids = cfg.unsigned64("synth.num_grids");
  c.seed = cfg.unsigned64("synth.seed");
  c.horizontal_coherence = cfg.real("synth.horizontal_coherence");

  // "cls:row0,col0,rows,cols:lo-hi" entries separated by ';'
  for (const std::string& spec : split_on(cfg.str("synth.regions"), ';')) {
    if (spec.empty()) continue;
    const auto parts = split_on(spec, ':');
    if (parts.size() != 3) throw ConfigError("bad region spec '" + spec + "'");
    SynthRegion r;
    r.class_label = parse_u16(parts[0], "region class");
    const auto rect = split_on(parts[1], ',');
    if (rect.size() != 4) throw ConfigError("bad region rectangle in '" + spec + "'");
    r.row0 = parse_u16(rect[0], "region row0");
    r.col0 = parse_u16(rect[1], "region col0");
    r.rows = parse_u16(rect[2], "region rows");
    r.cols = parse_u16(rect[3], "region cols");
    const auto vocab = split_on(parts[2], '-');
    if (vocab.size() != 2) throw ConfigError("bad region vocabulary in '" + spec + "'");
    r.vocab_lo = parse_u16(vocab[0], "vocab lo");
    r.vocab_hi = parse_u16(vocab[1], "vocab hi");
    c.regions.push_back(r);
  }
  // "a-b" entries separated by ';'
  for (const std::string& spec : split_on(cfg.str("synth.synonyms"), ';')) {
    if (spec.empty()) continue;
    const auto ab = split_on(spec, '-');
    if (ab.size() != 2) throw ConfigError("bad synonym pair '" + spec + "'");
    c.synonym_pairs.emplace_back(parse_u16(ab[0], "synonym"), parse_u16(ab[1], "synonym"));
  }
  validate_synth_config(c);
  return c;
}

ModelConfig model_from_config(const RunConfig& cfg, const CorpusHeader& header) {
  ModelConfig m;
  m.codebook_size = header.codebook_size;
  m.height = header.height;
  m.width = header.width;
  m.num_classes = header.num_classes;
  m.dim = static_cast<int64_t>(cfg.unsigned64("model.dim"));
  m.num_layers = static_cast<int64_t>(cfg.unsigned64("model.layers"));
  m.num_heads = static_cast<int64_t>(cfg.unsigned64("model.heads"));
  m.alpha = cfg.real("model.alpha");
  m.separate_pos_maps = cfg.flag("model.separate_pos_maps");
  m.neg_on_unmasked = cfg.flag("model.neg_on_unmasked");
  m.validate();
  return m;
}

TrainConfig train_from_config(const RunConfig& cfg, Phase phase) {
  TrainConfig t;
  const bool pretrain = phase == Phase::kPretrain;
  t.steps = static_cast<int64_t>(
      cfg.unsigned64(pretrain ? "train.steps_pretrain" : "train.steps_finetune"));
  t.batch_size = static_cast<int64_t>(cfg.unsigned64("train.batch_size"));
  t.learning_rate = cfg.real(pretrain ? "train.lr_pretrain" : "train.lr_finetune");
  t.warmup_steps = static_cast<int64_t>(cfg.unsigned64("train.warmup_steps"));
  t.seed = cfg.unsigned64("train.seed");
  t.num_threads = static_cast<int>(cfg.unsigned64("train.threads"));
  t.log_every = static_cast<int64_t>(cfg.unsigned64("train.log_every"));
  t.verbose = cfg.flag("train.verbose");
  return t;
}

PriorCachePolicy policy_from_config(const RunConfig& cfg) {
  PriorCachePolicy p;
  p.cooc = parse_prior_policy(cfg.str("prior.policy_cooc"));
  p.sim = parse_prior_policy(cfg.str("prior.policy_sim"));
  p.neg = parse_prior_policy(cfg.str("prior.policy_neg"));
  return p;
}

}  // namespace kamg
