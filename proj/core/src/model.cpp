#include "kamg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kamg/digest.hpp"
#include "kamg/errors.hpp"

namespace kamg {

void ModelConfig::validate() const {
  if (codebook_size < 2) throw ConfigError("model codebook size must be >= 2");
  if (grid_len() < 1) throw ConfigError("model grid must be non-empty");
  if (num_classes < 1) throw ConfigError("model needs at least one class");
  if (dim < 1 || num_layers < 1 || num_heads < 1) throw ConfigError("bad model dimensions");
  if (dim % num_heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
}

MaskState sample_mask(int64_t n, Rng& rng) {
  if (n < 1) throw ContractError("sample_mask needs n >= 1");
  const double u = rng.uniform();
  const double ratio = std::cos(M_PI * u / 2.0);
  int64_t count = static_cast<int64_t>(std::ceil(ratio * static_cast<double>(n)));
  count = std::max<int64_t>(1, std::min(n, count));
  return sample_mask_exact(n, count, rng);
}

MaskState sample_mask_exact(int64_t n, int64_t count, Rng& rng) {
  if (count < 1 || count > n) {
    throw ContractError("mask count " + std::to_string(count) + " outside [1," +
                        std::to_string(n) + "]");
  }
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  MaskState m;
  m.masked.assign(static_cast<size_t>(n), 0);
  m.masked_count = count;
  for (int64_t i = 0; i < count; ++i) {
    const int64_t j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    m.masked[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
  }
  return m;
}

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (has(name)) throw ContractError("parameter '" + name + "' already registered");
  order_.push_back(name);
  return tensors_[name] = std::move(init);
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

int64_t ParamStore::total_elements(const std::vector<std::string>& names) const {
  int64_t n = 0;
  for (const auto& name : names) n += get(name).numel();
  return n;
}

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kPretrain: return "pretrain";
    case Phase::kFinetuneKa: return "finetune";
    case Phase::kFinetuneBaseline: return "baseline";
  }
  throw ContractError("bad phase");
}

Phase parse_phase(const std::string& s) {
  if (s == "pretrain") return Phase::kPretrain;
  if (s == "finetune") return Phase::kFinetuneKa;
  if (s == "baseline") return Phase::kFinetuneBaseline;
  throw ConfigError("unknown phase '" + s + "' (want pretrain|finetune|baseline)");
}

namespace {
std::string layer_prefix(int64_t l) { return "layer" + std::to_string(l) + "."; }
}  // namespace

std::vector<std::string> backbone_param_names(const ModelConfig& cfg) {
  std::vector<std::string> names = {"tok_emb", "pos_emb", "cls_emb"};
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* s : {"ln1.g", "ln1.b", "attn.wq", "attn.bq", "attn.wk", "attn.bk",
                          "attn.wv", "attn.bv", "attn.wo", "attn.bo", "ln2.g", "ln2.b",
                          "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"}) {
      names.push_back(p + s);
    }
  }
  names.push_back("final_ln.g");
  names.push_back("final_ln.b");
  names.push_back("head.w");
  names.push_back("head.b");
  return names;
}

std::vector<std::string> classifier_param_names() { return {"head.w", "head.b"}; }

std::vector<std::string> ka_param_names(const ModelConfig& cfg) {
  std::vector<std::string> names = {"prior.codebook"};
  for (const char* g : {"prior.gcn_co.", "prior.gcn_s."}) {
    for (int l = 0; l < 3; ++l) {
      names.push_back(std::string(g) + "w" + std::to_string(l));
      names.push_back(std::string(g) + "b" + std::to_string(l));
    }
  }
  names.push_back("prior.neg.w");
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = "fusion.l" + std::to_string(l) + ".";
    names.push_back(p + "pos.w");
    names.push_back(p + "pos.b");
    if (cfg.separate_pos_maps) {
      names.push_back(p + "pos2.w");
      names.push_back(p + "pos2.b");
    }
    names.push_back(p + "neg.w");
    names.push_back(p + "neg.b");
  }
  return names;
}

std::vector<std::string> trainable_param_names(const ModelConfig& cfg, Phase phase) {
  switch (phase) {
    case Phase::kPretrain: return backbone_param_names(cfg);
    case Phase::kFinetuneBaseline: return classifier_param_names();
    case Phase::kFinetuneKa: {
      std::vector<std::string> names = classifier_param_names();
      const auto ka = ka_param_names(cfg);
      names.insert(names.end(), ka.begin(), ka.end());
      return names;
    }
  }
  throw ContractError("bad phase");
}

std::vector<std::string> frozen_param_names(const ModelConfig& cfg, Phase phase) {
  const auto trainable = trainable_param_names(cfg, phase);
  std::vector<std::string> frozen;
  for (const auto& name : backbone_param_names(cfg)) {
    if (std::find(trainable.begin(), trainable.end(), name) == trainable.end()) {
      frozen.push_back(name);
    }
  }
  return frozen;
}

namespace {

Tensor gaussian_tensor(std::vector<int64_t> shape, Rng& rng, double std_dev) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = std_dev * rng.gaussian();
  return t;
}

}  // namespace

void init_backbone(ParamStore& params, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t d = cfg.dim;
  const int64_t n = cfg.grid_len();
  const int64_t k = cfg.codebook_size;
  constexpr double kStd = 0.02;

  params.add("tok_emb", gaussian_tensor({k + 1, d}, rng, kStd));
  params.add("pos_emb", gaussian_tensor({n, d}, rng, kStd));
  params.add("cls_emb", gaussian_tensor({cfg.num_classes, d}, rng, kStd));
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    params.add(p + "ln1.g", Tensor::full({d}, 1.0));
    params.add(p + "ln1.b", Tensor({d}));
    for (const char* s : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      params.add(p + s, gaussian_tensor({d, d}, rng, kStd));
    }
    for (const char* s : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
      params.add(p + s, Tensor({d}));
    }
    params.add(p + "ln2.g", Tensor::full({d}, 1.0));
    params.add(p + "ln2.b", Tensor({d}));
    params.add(p + "mlp.w1", gaussian_tensor({d, 4 * d}, rng, kStd));
    params.add(p + "mlp.b1", Tensor({4 * d}));
    params.add(p + "mlp.w2", gaussian_tensor({4 * d, d}, rng, kStd));
    params.add(p + "mlp.b2", Tensor({d}));
  }
  params.add("final_ln.g", Tensor::full({d}, 1.0));
  params.add("final_ln.b", Tensor({d}));
  params.add("head.w", gaussian_tensor({d, k}, rng, kStd));
  params.add("head.b", Tensor({k}));
}

void init_ka_extras(ParamStore& params, const ModelConfig& cfg, Rng& rng) {
  const int64_t d = cfg.dim;
  constexpr double kStd = 0.02;

  params.add("prior.codebook", gaussian_tensor({cfg.codebook_size, d}, rng, kStd));
  for (const char* g : {"prior.gcn_co.", "prior.gcn_s."}) {
    for (int l = 0; l < 3; ++l) {
      params.add(std::string(g) + "w" + std::to_string(l), gaussian_tensor({d, d}, rng, kStd));
      params.add(std::string(g) + "b" + std::to_string(l), Tensor({d}));
    }
  }
  params.add("prior.neg.w", gaussian_tensor({d, d}, rng, kStd));
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = "fusion.l" + std::to_string(l) + ".";
    params.add(p + "pos.w", Tensor({d, d}));  // zero: fusion is a no-op at init
    params.add(p + "pos.b", Tensor({d}));
    if (cfg.separate_pos_maps) {
      params.add(p + "pos2.w", Tensor({d, d}));
      params.add(p + "pos2.b", Tensor({d}));
    }
    params.add(p + "neg.w", Tensor({d, d}));
    params.add(p + "neg.b", Tensor({d}));
  }
}

bool has_ka_extras(const ParamStore& params) { return params.has("prior.codebook"); }

Tape::NodeId TapeBinding::at(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end()) throw ContractError("parameter '" + name + "' not bound");
  return it->second;
}

TapeBinding bind_params(Tape& tape, const ParamStore& params,
                        const std::vector<std::string>& trainable) {
  // Parameters are borrowed, not copied: the store outlives any step tape
  // and stays unmodified until the gradients have been extracted.
  TapeBinding bound;
  for (const auto& name : params.names()) {
    const bool rg = std::find(trainable.begin(), trainable.end(), name) != trainable.end();
    bound.ids[name] = tape.borrow(&params.get(name), rg);
  }
  return bound;
}

PriorOperators PriorOperators::build(const CoocGraph& cooc, const SimGraph& sim,
                                     const IncompatGraph& incompat) {
  PriorOperators ops;
  ops.cooc_prop = cooc_propagation(cooc);
  ops.sim_prop = sim_propagation(sim);
  ops.neg_selectors.reserve(incompat.num_classes);
  for (uint32_t c = 0; c < incompat.num_classes; ++c) {
    ops.neg_selectors.push_back(incompat_selector(incompat, c));
  }
  return ops;
}

namespace {

GcnNodeIds gcn_ids(const TapeBinding& bound, const std::string& prefix) {
  GcnNodeIds ids;
  for (int l = 0; l < 3; ++l) {
    ids.w[l] = bound.at(prefix + "w" + std::to_string(l));
    ids.b[l] = bound.at(prefix + "b" + std::to_string(l));
  }
  return ids;
}

}  // namespace

PriorNodes build_prior_nodes(Tape& tape, const TapeBinding& bound, const PriorOperators& ops,
                             uint32_t cls) {
  if (cls >= ops.neg_selectors.size()) {
    throw DataError("class " + std::to_string(cls) + " has no incompatibility selector");
  }
  PriorNodes p;
  const Tape::NodeId codebook = bound.at("prior.codebook");
  p.cooc = gcn_forward(tape, ops.cooc_prop, codebook, gcn_ids(bound, "prior.gcn_co."));
  p.sim = gcn_forward(tape, ops.sim_prop, codebook, gcn_ids(bound, "prior.gcn_s."));
  p.neg = negative_position_embedding(tape, ops.neg_selectors[cls], codebook,
                                      bound.at("prior.neg.w"));
  return p;
}

PriorNodes cached_prior_nodes(Tape& tape, const PriorCache& cache, const TapeBinding& bound,
                              const PriorOperators* ops, uint32_t cls) {
  PriorNodes p;
  const bool need_online = cache.policy.cooc == PriorPolicy::kOnline ||
                           cache.policy.sim == PriorPolicy::kOnline ||
                           cache.policy.neg == PriorPolicy::kOnline;
  if (need_online && ops == nullptr) {
    throw ContractError("online prior policy requires graph operators");
  }
  if (cache.policy.cooc == PriorPolicy::kPrecomputed) {
    p.cooc = tape.borrow(&cache.cooc_embed);
  } else {
    p.cooc = gcn_forward(tape, ops->cooc_prop, bound.at("prior.codebook"),
                         gcn_ids(bound, "prior.gcn_co."));
  }
  if (cache.policy.sim == PriorPolicy::kPrecomputed) {
    p.sim = tape.borrow(&cache.sim_embed);
  } else {
    p.sim = gcn_forward(tape, ops->sim_prop, bound.at("prior.codebook"),
                        gcn_ids(bound, "prior.gcn_s."));
  }
  if (cache.policy.neg == PriorPolicy::kPrecomputed) {
    auto it = cache.neg_embed.find(cls);
    if (it == cache.neg_embed.end()) {
      throw DataError("class " + std::to_string(cls) + " missing from prior cache");
    }
    p.neg = tape.borrow(&it->second);
  } else {
    if (cls >= ops->neg_selectors.size()) {
      throw DataError("class " + std::to_string(cls) + " has no incompatibility selector");
    }
    p.neg = negative_position_embedding(tape, ops->neg_selectors[cls],
                                        bound.at("prior.codebook"), bound.at("prior.neg.w"));
  }
  return p;
}

namespace {

Tape::NodeId affine(Tape& tape, Tape::NodeId x, Tape::NodeId w, Tape::NodeId b) {
  return tape.add_rowvec(tape.matmul(x, w), b);
}

}  // namespace

Tape::NodeId model_forward(Tape& tape, const ModelConfig& cfg, const TapeBinding& bound,
                           const std::vector<uint16_t>& tokens, const MaskState& mask,
                           uint32_t cls, const PriorNodes* priors) {
  const int64_t n = cfg.grid_len();
  const int64_t d = cfg.dim;
  if (static_cast<int64_t>(tokens.size()) != n) {
    throw ContractError("forward expects " + std::to_string(n) + " tokens, got " +
                        std::to_string(tokens.size()));
  }
  if (static_cast<int64_t>(mask.masked.size()) != n) {
    throw ContractError("mask length " + std::to_string(mask.masked.size()) + " != " +
                        std::to_string(n));
  }
  if (cls >= cfg.num_classes) {
    throw DataError("class " + std::to_string(cls) + " outside [0," +
                    std::to_string(cfg.num_classes) + ")");
  }

  std::vector<int64_t> input_ids(static_cast<size_t>(n));
  std::vector<int64_t> prior_ids(static_cast<size_t>(n));  // 0 at masked cells; row scaled away
  Tensor unmasked_ind({n});
  Tensor neg_coeff({n});
  for (int64_t i = 0; i < n; ++i) {
    const bool is_masked = mask.masked[static_cast<size_t>(i)] != 0;
    input_ids[static_cast<size_t>(i)] = is_masked ? cfg.mask_token() : tokens[static_cast<size_t>(i)];
    prior_ids[static_cast<size_t>(i)] = is_masked ? 0 : tokens[static_cast<size_t>(i)];
    unmasked_ind[i] = is_masked ? 0.0 : 1.0;
    neg_coeff[i] = (is_masked || cfg.neg_on_unmasked) ? cfg.alpha : 0.0;
  }

  Tape::NodeId h = tape.embedding(bound.at("tok_emb"), input_ids);
  h = tape.add(h, bound.at("pos_emb"));
  h = tape.add(h, tape.embedding(bound.at("cls_emb"), std::vector<int64_t>(static_cast<size_t>(n),
                                                                           cls)));

  const int64_t head_dim = d / cfg.num_heads;
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string p = layer_prefix(l);

    if (priors) {
      const std::string f = "fusion.l" + std::to_string(l) + ".";
      Tape::NodeId co_rows = tape.embedding(priors->cooc, prior_ids);
      Tape::NodeId sim_rows = tape.embedding(priors->sim, prior_ids);
      Tape::NodeId fused =
          affine(tape, co_rows, bound.at(f + "pos.w"), bound.at(f + "pos.b"));
      const std::string pos2 = cfg.separate_pos_maps ? f + "pos2." : f + "pos.";
      fused = tape.add(fused, affine(tape, sim_rows, bound.at(pos2 + "w"), bound.at(pos2 + "b")));
      h = tape.add(h, tape.scale_rows(fused, unmasked_ind));

      Tape::NodeId neg = affine(tape, priors->neg, bound.at(f + "neg.w"), bound.at(f + "neg.b"));
      h = tape.sub(h, tape.scale_rows(neg, neg_coeff));
    }

    Tape::NodeId a = tape.layer_norm(h, bound.at(p + "ln1.g"), bound.at(p + "ln1.b"));
    Tape::NodeId q = affine(tape, a, bound.at(p + "attn.wq"), bound.at(p + "attn.bq"));
    Tape::NodeId k = affine(tape, a, bound.at(p + "attn.wk"), bound.at(p + "attn.bk"));
    Tape::NodeId v = affine(tape, a, bound.at(p + "attn.wv"), bound.at(p + "attn.bv"));

    std::vector<Tape::NodeId> heads;
    heads.reserve(static_cast<size_t>(cfg.num_heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (int64_t hh = 0; hh < cfg.num_heads; ++hh) {
      Tape::NodeId qh = tape.slice_cols(q, hh * head_dim, head_dim);
      Tape::NodeId kh = tape.slice_cols(k, hh * head_dim, head_dim);
      Tape::NodeId vh = tape.slice_cols(v, hh * head_dim, head_dim);
      Tape::NodeId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
      heads.push_back(tape.matmul(tape.softmax(scores), vh));
    }
    Tape::NodeId attn_out = affine(tape, tape.concat_cols(heads), bound.at(p + "attn.wo"),
                                   bound.at(p + "attn.bo"));
    h = tape.add(h, attn_out);

    Tape::NodeId m = tape.layer_norm(h, bound.at(p + "ln2.g"), bound.at(p + "ln2.b"));
    m = affine(tape, m, bound.at(p + "mlp.w1"), bound.at(p + "mlp.b1"));
    m = tape.gelu(m);
    m = affine(tape, m, bound.at(p + "mlp.w2"), bound.at(p + "mlp.b2"));
    h = tape.add(h, m);
  }

  h = tape.layer_norm(h, bound.at("final_ln.g"), bound.at("final_ln.b"));
  return affine(tape, h, bound.at("head.w"), bound.at("head.b"));
}

Tape::NodeId masked_nll_loss(Tape& tape, const ModelConfig& cfg, Tape::NodeId logits,
                             const std::vector<uint16_t>& targets, const MaskState& mask) {
  const int64_t n = cfg.grid_len();
  if (mask.masked_count < 1) throw ContractError("loss needs at least one masked position");
  std::vector<int64_t> tgt(static_cast<size_t>(n));
  std::vector<double> weights(static_cast<size_t>(n), 0.0);
  const double w = 1.0 / static_cast<double>(mask.masked_count);
  for (int64_t i = 0; i < n; ++i) {
    tgt[static_cast<size_t>(i)] = targets[static_cast<size_t>(i)];
    if (mask.masked[static_cast<size_t>(i)]) weights[static_cast<size_t>(i)] = w;
  }
  return tape.cross_entropy(logits, std::move(tgt), std::move(weights));
}

Tensor InferenceModel::logits(const std::vector<uint16_t>& tokens, const MaskState& mask,
                              uint32_t cls) const {
  Tape tape;
  TapeBinding bound = bind_params(tape, *params);
  PriorNodes nodes;
  const PriorNodes* ptr = nullptr;
  if (use_ka) {
    if (!has_ka_extras(*params)) throw ContractError("model has no prior parameters");
    if (cache != nullptr) {
      nodes = cached_prior_nodes(tape, *cache, bound, prior_ops, cls);
    } else {
      if (prior_ops == nullptr) throw ContractError("KA inference needs prior operators");
      nodes = build_prior_nodes(tape, bound, *prior_ops, cls);
    }
    ptr = &nodes;
  }
  return tape.value(model_forward(tape, *config, bound, tokens, mask, cls, ptr));
}

// --- checkpoint io ----------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'K', 'A', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}
void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}
void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}
void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct CkptReader {
  std::ifstream in;
  std::string path;

  uint32_t u32() {
    char b[4];
    if (!in.read(b, 4)) throw DataError(path + ": truncated checkpoint");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(b[i])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    char b[8];
    if (!in.read(b, 8)) throw DataError(path + ": truncated checkpoint");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(b[i])) << (8 * i);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const uint32_t len = u32();
    if (len > (1u << 20)) throw DataError(path + ": implausible string length");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) throw DataError(path + ": truncated checkpoint");
    return s;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(kCkptMagic, 4);
  put_u32(os, kCkptVersion);
  const ModelConfig& c = ckpt.config;
  put_u32(os, c.codebook_size);
  put_u32(os, c.height);
  put_u32(os, c.width);
  put_u32(os, c.num_classes);
  put_u64(os, static_cast<uint64_t>(c.dim));
  put_u64(os, static_cast<uint64_t>(c.num_layers));
  put_u64(os, static_cast<uint64_t>(c.num_heads));
  put_f64(os, c.alpha);
  put_u32(os, (c.separate_pos_maps ? 1u : 0u) | (c.neg_on_unmasked ? 2u : 0u));
  put_string(os, ckpt.phase);
  put_u64(os, ckpt.seed);

  put_u32(os, static_cast<uint32_t>(ckpt.params.names().size()));
  for (const auto& name : ckpt.params.names()) {
    const Tensor& t = ckpt.params.get(name);
    put_string(os, name);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t i = 0; i < t.rank(); ++i) put_u64(os, static_cast<uint64_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
  }
  if (!os) throw DataError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  CkptReader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) throw DataError("cannot open " + path);
  char magic[4];
  if (!r.in.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0) {
    throw DataError(path + ": not a checkpoint file");
  }
  if (r.u32() != kCkptVersion) throw DataError(path + ": unsupported checkpoint version");

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  c.codebook_size = r.u32();
  c.height = static_cast<uint16_t>(r.u32());
  c.width = static_cast<uint16_t>(r.u32());
  c.num_classes = r.u32();
  c.dim = static_cast<int64_t>(r.u64());
  c.num_layers = static_cast<int64_t>(r.u64());
  c.num_heads = static_cast<int64_t>(r.u64());
  c.alpha = r.f64();
  const uint32_t flags = r.u32();
  c.separate_pos_maps = (flags & 1u) != 0;
  c.neg_on_unmasked = (flags & 2u) != 0;
  ckpt.phase = r.str();
  ckpt.seed = r.u64();
  c.validate();

  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const uint32_t rank = r.u32();
    if (rank > 8) throw DataError(path + ": implausible tensor rank");
    std::vector<int64_t> shape(rank);
    for (uint32_t j = 0; j < rank; ++j) shape[j] = static_cast<int64_t>(r.u64());
    Tensor t(shape);
    if (!r.in.read(reinterpret_cast<char*>(t.data()),
                   static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))))) {
      throw DataError(path + ": truncated tensor '" + name + "'");
    }
    ckpt.params.add(name, std::move(t));
  }
  return ckpt;
}

std::unordered_map<std::string, uint64_t> param_digests(const ParamStore& params,
                                                        const std::vector<std::string>& names) {
  std::unordered_map<std::string, uint64_t> out;
  for (const auto& name : names) out[name] = tensor_digest(params.get(name));
  return out;
}

}  // namespace kamg
