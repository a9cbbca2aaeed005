// Pipeline driver: synth -> mine -> train (pretrain/finetune/baseline)
// -> sample / eval / report. One flat config file plus key=value overrides;
// every command writes its resolved config next to its outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kamg/config.hpp"
#include "kamg/digest.hpp"
#include "kamg/errors.hpp"
#include "kamg/eval.hpp"
#include "kamg/graphs.hpp"
#include "kamg/model.hpp"
#include "kamg/prior.hpp"
#include "kamg/runtime.hpp"
#include "kamg/sampler.hpp"
#include "kamg/synthetic.hpp"
#include "kamg/train.hpp"

namespace fs = std::filesystem;
using namespace kamg;

namespace {

struct Paths {
  std::string corpus, cooc, sim, incompat, backbone, ka, baseline, cache;
};

Paths paths_of(const RunConfig& cfg) {
  Paths p;
  p.corpus = cfg.corpus_path();
  p.cooc = cfg.path_in_outdir("cooc.graph");
  p.sim = cfg.path_in_outdir("sim.graph");
  p.incompat = cfg.path_in_outdir("incompat.graph");
  p.backbone = cfg.path_in_outdir("backbone.ckpt");
  p.ka = cfg.path_in_outdir("ka.ckpt");
  p.baseline = cfg.path_in_outdir("baseline.ckpt");
  p.cache = cfg.path_in_outdir("prior.cache");
  return p;
}

void prepare_outdir(const RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir());
  cfg.write_resolved(cfg.path_in_outdir("resolved_" + command + ".cfg"));
}

Corpus load_train_split(const RunConfig& cfg) {
  const Corpus corpus = read_corpus(cfg.corpus_path());
  return split_corpus(corpus, cfg.real("corpus.heldout_fraction"),
                      cfg.unsigned64("corpus.split_seed"))
      .train;
}

Corpus load_heldout_split(const RunConfig& cfg) {
  const Corpus corpus = read_corpus(cfg.corpus_path());
  return split_corpus(corpus, cfg.real("corpus.heldout_fraction"),
                      cfg.unsigned64("corpus.split_seed"))
      .heldout;
}

uint64_t auto_prune_threshold(const RunConfig& cfg, const Corpus& train) {
  const uint64_t configured = cfg.unsigned64("mine.prune_min_count");
  if (configured != 0) return configured;
  const uint64_t total =
      train.header.num_grids * cooc_pairs_per_grid(train.header.height, train.header.width);
  return std::max<uint64_t>(2, static_cast<uint64_t>(1e-7 * static_cast<double>(total)));
}

int cmd_synth(const RunConfig& cfg) {
  prepare_outdir(cfg, "synth");
  const SynthConfig sc = synth_from_config(cfg);
  const Corpus corpus = generate_synthetic(sc);
  write_corpus(corpus, cfg.corpus_path());
  std::printf("wrote %llu grids (K=%u %ux%u classes=%u) to %s\n",
              static_cast<unsigned long long>(corpus.header.num_grids),
              corpus.header.codebook_size, corpus.header.height, corpus.header.width,
              corpus.header.num_classes, cfg.corpus_path().c_str());
  return 0;
}

int cmd_mine(const RunConfig& cfg) {
  prepare_outdir(cfg, "mine");
  const Paths p = paths_of(cfg);
  const Corpus train = load_train_split(cfg);
  const int threads = static_cast<int>(cfg.unsigned64("mine.threads"));

  const uint64_t prune = auto_prune_threshold(cfg, train);
  CoocGraph cooc = mine_cooccurrence(train, prune, cfg.flag("mine.count_self_pairs"), threads);
  const size_t cooc_edges = cooc.entries.size();
  cooc = normalize_cooccurrence(std::move(cooc));
  export_graph(cooc, p.cooc);

  const PositionDistribution dist =
      position_distribution(train, cfg.real("mine.smoothing_epsilon"), threads);
  const SimGraph sim =
      mine_similarity(dist, static_cast<int>(cfg.unsigned64("mine.top_k")), threads);
  export_graph(sim, p.sim);

  const IncompatGraph incompat = mine_incompatibility(train, threads);
  export_graph(incompat, p.incompat);

  size_t sim_edges = 0;
  for (const auto& e : sim.edges) sim_edges += e.size();
  uint64_t incompat_bits = 0;
  for (uint32_t c = 0; c < incompat.num_classes; ++c)
    for (int64_t i = 0; i < incompat.grid_len; ++i)
      incompat_bits += static_cast<uint64_t>(incompat.set_size(c, i));

  const uint64_t total_pairs =
      train.header.num_grids * cooc_pairs_per_grid(train.header.height, train.header.width);
  const double k = static_cast<double>(train.header.codebook_size);
  std::ofstream stats(cfg.path_in_outdir("mine_stats.txt"), std::ios::trunc);
  stats << "train_grids=" << train.header.num_grids << "\n"
        << "total_adjacent_pairs=" << total_pairs << "\n"
        << "prune_min_count=" << prune << "\n"
        << "cooc_edges=" << cooc_edges << "\n"
        << "cooc_density=" << static_cast<double>(cooc_edges) / (k * (k + 1) / 2) << "\n"
        << "sim_edges=" << sim_edges << "\n"
        << "incompatible_pairs=" << incompat_bits << "\n";
  std::printf("mined %zu cooc edges (prune>=%llu), %zu sim edges, %llu incompatible pairs\n",
              cooc_edges, static_cast<unsigned long long>(prune), sim_edges,
              static_cast<unsigned long long>(incompat_bits));
  for (uint32_t c : incompat.empty_classes) {
    std::printf("warning: class %u has no training grids; all tokens incompatible\n", c);
  }
  return 0;
}

struct LoadedGraphs {
  CoocGraph cooc;
  SimGraph sim;
  IncompatGraph incompat;
  PriorOperators ops;
};

LoadedGraphs load_graphs(const Paths& p) {
  for (const std::string& path : {p.cooc, p.sim, p.incompat}) {
    if (!fs::exists(path)) {
      throw DataError("missing graph file " + path + " (run the mine command first)");
    }
  }
  LoadedGraphs g;
  g.cooc = import_cooc_graph(p.cooc);
  g.sim = import_sim_graph(p.sim);
  g.incompat = import_incompat_graph(p.incompat);
  g.ops = PriorOperators::build(g.cooc, g.sim, g.incompat);
  return g;
}

GcnWeights gcn_from_store(const ParamStore& params, const std::string& prefix) {
  GcnWeights w;
  for (int l = 0; l < 3; ++l) {
    w.w[l] = params.get(prefix + "w" + std::to_string(l));
    w.b[l] = params.get(prefix + "b" + std::to_string(l));
  }
  return w;
}

PriorCache cache_from_params(const LoadedGraphs& g, const ParamStore& params,
                             const PriorCachePolicy& policy) {
  return build_prior_cache(g.cooc, g.sim, g.incompat, params.get("prior.codebook"),
                           gcn_from_store(params, "prior.gcn_co."),
                           gcn_from_store(params, "prior.gcn_s."), params.get("prior.neg.w"),
                           policy);
}

int cmd_train(const RunConfig& cfg, const std::string& phase_str) {
  prepare_outdir(cfg, "train_" + phase_str);
  const Paths p = paths_of(cfg);
  const Phase phase = parse_phase(phase_str);
  const Corpus train = load_train_split(cfg);
  const ModelConfig mc = model_from_config(cfg, train.header);
  const TrainConfig tc = train_from_config(cfg, phase);

  if (phase == Phase::kPretrain) {
    ParamStore params;
    Rng rng(tc.seed);
    init_backbone(params, mc, rng);
    const LossCurve curve = pretrain_backbone(params, mc, train, tc);
    curve.save(cfg.path_in_outdir("backbone_loss.tsv"));
    save_checkpoint({mc, phase_str, tc.seed, std::move(params)}, p.backbone);
    std::printf("pretrained backbone -> %s (final loss %.4f)\n", p.backbone.c_str(),
                curve.points.empty() ? 0.0 : curve.points.back().second);
    return 0;
  }

  if (!fs::exists(p.backbone)) {
    throw DataError("missing backbone checkpoint " + p.backbone + " (run train pretrain first)");
  }
  Checkpoint backbone = load_checkpoint(p.backbone);
  ParamStore& params = backbone.params;

  if (phase == Phase::kFinetuneBaseline) {
    const LossCurve curve = finetune(params, mc, train, nullptr, phase, tc);
    curve.save(cfg.path_in_outdir("baseline_loss.tsv"));
    save_checkpoint({mc, phase_str, tc.seed, std::move(params)}, p.baseline);
    std::printf("baseline (classifier-only) fine-tune -> %s\n", p.baseline.c_str());
    return 0;
  }

  // KA fine-tune: frozen backbone, trainable head + prior encoders + fusion.
  const LoadedGraphs g = load_graphs(p);
  Rng ka_rng(Rng::derive(tc.seed, 1));
  init_ka_extras(params, mc, ka_rng);

  const auto frozen = frozen_param_names(mc, phase);
  const auto before = param_digests(params, frozen);
  const LossCurve curve = finetune(params, mc, train, &g.ops, phase, tc);
  const auto after = param_digests(params, frozen);
  for (const auto& name : frozen) {
    if (before.at(name) != after.at(name)) {
      throw NumericError("freeze contract violated: backbone tensor '" + name +
                         "' changed during fine-tuning");
    }
  }

  curve.save(cfg.path_in_outdir("ka_loss.tsv"));
  const PriorCache cache = cache_from_params(g, params, policy_from_config(cfg));
  save_prior_cache(cache, p.cache);
  save_checkpoint({mc, phase_str, tc.seed, std::move(params)}, p.ka);
  std::printf("KA fine-tune -> %s (frozen backbone verified, prior cache -> %s)\n", p.ka.c_str(),
              p.cache.c_str());
  return 0;
}

// Resolves which checkpoint a sample/eval command should use.
std::string resolve_model_path(const RunConfig& cfg, const std::string& requested) {
  if (!requested.empty()) return requested;
  const Paths p = paths_of(cfg);
  if (fs::exists(p.ka)) return p.ka;
  if (fs::exists(p.backbone)) return p.backbone;
  throw DataError("no checkpoint found in " + cfg.out_dir() + " (run train first)");
}

struct LoadedModel {
  Checkpoint ckpt;
  LoadedGraphs graphs;
  PriorCache cache;
  bool has_graphs = false;
  bool has_cache = false;
  InferenceModel model;
};

// Assembles an inference model; KA checkpoints pull in graphs and, when
// present and fresh, the serialized prior cache.
void setup_inference(LoadedModel& m, const RunConfig& cfg, const std::string& path) {
  const Paths p = paths_of(cfg);
  m.ckpt = load_checkpoint(path);
  m.model.config = &m.ckpt.config;
  m.model.params = &m.ckpt.params;
  m.model.use_ka = has_ka_extras(m.ckpt.params);
  if (!m.model.use_ka) return;

  m.graphs = load_graphs(p);
  m.has_graphs = true;
  m.model.prior_ops = &m.graphs.ops;
  if (fs::exists(p.cache)) {
    m.cache = load_prior_cache(p.cache);
    const bool fresh = m.cache.cooc_digest == graph_digest(m.graphs.cooc) &&
                       m.cache.sim_digest == graph_digest(m.graphs.sim) &&
                       m.cache.incompat_digest == graph_digest(m.graphs.incompat);
    if (fresh) {
      m.has_cache = true;
      m.model.cache = &m.cache;
    } else {
      std::printf("note: %s is stale (graph digests changed); computing priors online\n",
                  p.cache.c_str());
    }
  }
}

int cmd_sample(const RunConfig& cfg, const std::string& model_path) {
  prepare_outdir(cfg, "sample");
  LoadedModel lm;
  setup_inference(lm, cfg, resolve_model_path(cfg, model_path));
  const ModelConfig& mc = lm.ckpt.config;

  const uint32_t cls = static_cast<uint32_t>(cfg.unsigned64("sample.class"));
  const uint64_t count = cfg.unsigned64("sample.count");
  const DecodeSchedule schedule =
      DecodeSchedule::cosine(mc.grid_len(), static_cast<int64_t>(cfg.unsigned64("sample.steps")));
  const double temperature = cfg.real("sample.temperature");
  const uint64_t seed = cfg.unsigned64("sample.seed");

  const std::vector<uint32_t> classes(count, cls);
  const std::vector<TokenGrid> grids = decode_batch(lm.model, classes, schedule, temperature, seed,
                                                    static_cast<int>(cfg.unsigned64("mine.threads")));

  CorpusHeader header;
  header.codebook_size = mc.codebook_size;
  header.height = mc.height;
  header.width = mc.width;
  header.num_classes = mc.num_classes;
  header.num_grids = grids.size();
  write_corpus(header, grids, cfg.path_in_outdir("samples.kamg"));

  if (cfg.flag("sample.trace") && count > 0) {
    const auto [grid, trace] = decode(lm.model, cls, schedule, temperature, Rng::derive(seed, 0));
    write_trace(trace, cfg.path_in_outdir("samples_trace.txt"));
  }
  std::printf("decoded %llu grids of class %u (T=%lld, temperature %.2f) -> %s\n",
              static_cast<unsigned long long>(count), cls,
              static_cast<long long>(schedule.steps()), temperature,
              cfg.path_in_outdir("samples.kamg").c_str());
  return 0;
}

EvalReport base_report(const RunConfig& cfg, const std::string& metric, double value,
                       uint64_t seed) {
  EvalReport r;
  r.metric = metric;
  r.value = value;
  r.seed = seed;
  r.config_digest = hex_u64(cfg.digest());
  r.corpus_digest = hex_u64(file_digest(cfg.corpus_path()));
  return r;
}

int cmd_eval(const RunConfig& cfg, const std::string& metric, const std::string& model_path) {
  prepare_outdir(cfg, "eval_" + metric);
  const Paths p = paths_of(cfg);
  const Corpus heldout = load_heldout_split(cfg);
  const uint64_t seed = cfg.unsigned64("eval.seed");

  if (metric == "nll" || metric == "ndcg") {
    LoadedModel lm;
    setup_inference(lm, cfg, resolve_model_path(cfg, model_path));
    const double ratio = cfg.real("eval.mask_ratio");
    double value;
    if (metric == "nll") {
      value = masked_nll(lm.model, heldout, ratio, seed);
    } else {
      value = ndcg_at_k(lm.model, heldout, ratio,
                        static_cast<int64_t>(cfg.unsigned64("eval.ndcg_k")), seed);
    }
    EvalReport r = base_report(cfg, metric, value, seed);
    r.extras["mask_ratio"] = ratio;
    r.write_kv(cfg.path_in_outdir("eval_" + metric + ".txt"));
    std::printf("%s = %.6f (mask ratio %.2f, heldout %zu grids)\n", metric.c_str(), value, ratio,
                heldout.grids.size());
    return 0;
  }

  if (metric == "compare") {
    LoadedModel base, ka;
    setup_inference(base, cfg, fs::exists(p.baseline) ? p.baseline : p.backbone);
    setup_inference(ka, cfg, p.ka);
    const int64_t k = static_cast<int64_t>(cfg.unsigned64("eval.ndcg_k"));
    const auto rows = compare_ranking(base.model, ka.model, heldout, {0.3, 0.5}, k, seed);
    EvalReport r = base_report(cfg, metric, rows.empty() ? 0.0 : rows[0].delta, seed);
    for (const auto& row : rows) {
      const std::string tag = "ratio_" + std::to_string(row.mask_ratio).substr(0, 3);
      r.extras[tag + "_baseline"] = row.ndcg_baseline;
      r.extras[tag + "_ka"] = row.ndcg_ka;
      r.extras[tag + "_delta"] = row.delta;
      std::printf("ndcg@%lld ratio %.1f: baseline %.6f ka %.6f delta %+.6f\n",
                  static_cast<long long>(k), row.mask_ratio, row.ndcg_baseline, row.ndcg_ka,
                  row.delta);
    }
    const double nll_base = masked_nll(base.model, heldout, 0.5, seed);
    const double nll_ka = masked_nll(ka.model, heldout, 0.5, seed);
    r.extras["nll_baseline"] = nll_base;
    r.extras["nll_ka"] = nll_ka;
    r.extras["nll_delta"] = nll_ka - nll_base;
    std::printf("masked nll ratio 0.5: baseline %.6f ka %.6f delta %+.6f\n", nll_base, nll_ka,
                nll_ka - nll_base);
    r.write_kv(cfg.path_in_outdir("eval_compare.txt"));
    return 0;
  }

  if (metric == "robustness") {
    LoadedModel lm;
    setup_inference(lm, cfg, resolve_model_path(cfg, model_path));
    if (!fs::exists(p.sim)) throw DataError("missing graph file " + p.sim);
    const SimGraph sim = import_sim_graph(p.sim);
    const auto rep = replacement_robustness(lm.model, sim, heldout, seed,
                                            static_cast<int64_t>(cfg.unsigned64("eval.replacements")));
    EvalReport r = base_report(cfg, metric, rep.delta_worst_mean - rep.delta_top1_mean, seed);
    r.extras["delta_top1"] = rep.delta_top1_mean;
    r.extras["delta_worst"] = rep.delta_worst_mean;
    r.extras["replacements"] = static_cast<double>(rep.replacements);
    r.extras["skipped"] = static_cast<double>(rep.skipped);
    r.write_kv(cfg.path_in_outdir("eval_robustness.txt"));
    std::printf("replacement robustness: top1 TV %.6f, worst TV %.6f (%lld replacements, %lld skipped)\n",
                rep.delta_top1_mean, rep.delta_worst_mean,
                static_cast<long long>(rep.replacements), static_cast<long long>(rep.skipped));
    return 0;
  }

  throw ConfigError("unknown metric '" + metric + "' (want nll|ndcg|compare|robustness)");
}

int cmd_report(const RunConfig& cfg) {
  prepare_outdir(cfg, "report");
  const Paths p = paths_of(cfg);
  const Corpus corpus = read_corpus(cfg.corpus_path());
  const ModelConfig mc = model_from_config(cfg, corpus.header);

  double mean_set = 0.0;
  if (fs::exists(p.incompat)) {
    const IncompatGraph incompat = import_incompat_graph(p.incompat);
    uint64_t total = 0;
    for (uint32_t c = 0; c < incompat.num_classes; ++c)
      for (int64_t i = 0; i < incompat.grid_len; ++i)
        total += static_cast<uint64_t>(incompat.set_size(c, i));
    mean_set = static_cast<double>(total) /
               (static_cast<double>(incompat.num_classes) * static_cast<double>(incompat.grid_len));
  }

  const CostReport report = CostReport::compute(mc, mean_set);
  std::ofstream f(cfg.path_in_outdir("cost_report.txt"), std::ios::trunc);
  char buf[96];
  for (const auto& [key, value] : report.as_map()) {
    std::snprintf(buf, sizeof(buf), "%s=%.17g\n", key.c_str(), value);
    f << buf;
    std::printf("%s", buf);
  }

  if (fs::exists(p.ka)) {
    const Checkpoint ckpt = load_checkpoint(p.ka);
    std::vector<std::string> fusion, gcn;
    for (const auto& name : ckpt.params.names()) {
      if (name.rfind("fusion.", 0) == 0) fusion.push_back(name);
      if (name.rfind("prior.gcn", 0) == 0) gcn.push_back(name);
    }
    std::snprintf(buf, sizeof(buf), "empirical_fusion_params=%lld\n",
                  static_cast<long long>(ckpt.params.total_elements(fusion)));
    f << buf;
    std::printf("%s", buf);
    std::snprintf(buf, sizeof(buf), "empirical_gcn_params=%lld\n",
                  static_cast<long long>(ckpt.params.total_elements(gcn)));
    f << buf;
    std::printf("%s", buf);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator_for_tensor_churn();
  CLI::App app{"knowledge-augmented masked token-grid generation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "config file (key = value lines)");
  app.add_option("-s,--set", overrides, "override, key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* mine = app.add_subcommand("mine", "mine the three prior graphs from the train split");
  auto* train = app.add_subcommand("train", "run a training phase");
  std::string phase = "pretrain";
  train->add_option("-p,--phase", phase, "pretrain|finetune|baseline")->required();
  auto* sample = app.add_subcommand("sample", "decode grids with the iterative sampler");
  std::string model_path;
  sample->add_option("-m,--model", model_path, "checkpoint path (default: ka, else backbone)");
  auto* eval = app.add_subcommand("eval", "evaluate a metric on the heldout split");
  std::string metric = "nll";
  eval->add_option("-M,--metric", metric, "nll|ndcg|compare|robustness")->required();
  eval->add_option("-m,--model", model_path, "checkpoint path (default: ka, else backbone)");
  auto* report = app.add_subcommand("report", "parameter/compute accounting");
  for (auto* sub : {synth, mine, train, sample, eval, report}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& kv : overrides) cfg.set_pair(kv);

    if (synth->parsed()) return cmd_synth(cfg);
    if (mine->parsed()) return cmd_mine(cfg);
    if (train->parsed()) return cmd_train(cfg, phase);
    if (sample->parsed()) return cmd_sample(cfg, model_path);
    if (eval->parsed()) return cmd_eval(cfg, metric, model_path);
    if (report->parsed()) return cmd_report(cfg);
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
