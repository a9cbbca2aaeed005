#include "kamg/prior.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "kamg/errors.hpp"

namespace kamg {

GcnWeights GcnWeights::init(int64_t dim, Rng& rng, double std_dev) {
  GcnWeights p;
  for (int l = 0; l < 3; ++l) {
    p.w[l] = Tensor({dim, dim});
    for (int64_t i = 0; i < p.w[l].numel(); ++i) p.w[l][i] = std_dev * rng.gaussian();
    p.b[l] = Tensor({dim});
  }
  return p;
}

SparseOperator cooc_propagation(const CoocGraph& graph) {
  if (!graph.normalized) {
    throw ContractError("cooc_propagation requires a normalized graph");
  }
  const int64_t k = graph.codebook_size;
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(graph.entries.size() * 2 + static_cast<size_t>(k));
  for (const auto& [key, w] : graph.entries) {
    t.push_back({key.first, key.second, w});
    if (key.first != key.second) t.push_back({key.second, key.first, w});
  }
  for (int64_t i = 0; i < k; ++i) t.push_back({i, i, 1.0});  // unit self-loops

  // symmetric renormalization of A + I
  std::vector<double> deg(static_cast<size_t>(k), 0.0);
  for (const auto& tr : t) deg[static_cast<size_t>(tr.row)] += tr.value;
  for (auto& tr : t) {
    tr.value /= std::sqrt(deg[static_cast<size_t>(tr.row)] * deg[static_cast<size_t>(tr.col)]);
  }
  return SparseOperator::make(SparseMatrix::from_triplets(k, k, std::move(t)));
}

SparseOperator sim_propagation(const SimGraph& graph) {
  const int64_t k = graph.codebook_size;
  const double w = 1.0 / static_cast<double>(graph.top_k);
  std::vector<SparseMatrix::Triplet> t;
  for (uint32_t src = 0; src < graph.codebook_size; ++src) {
    for (const auto& e : graph.edges[src]) t.push_back({src, e.target, w});
  }
  for (int64_t i = 0; i < k; ++i) t.push_back({i, i, 1.0});

  // row renormalization (the graph is directed)
  std::vector<double> deg(static_cast<size_t>(k), 0.0);
  for (const auto& tr : t) deg[static_cast<size_t>(tr.row)] += tr.value;
  for (auto& tr : t) tr.value /= deg[static_cast<size_t>(tr.row)];
  return SparseOperator::make(SparseMatrix::from_triplets(k, k, std::move(t)));
}

SparseOperator incompat_selector(const IncompatGraph& graph, uint32_t cls) {
  if (cls >= graph.num_classes) {
    throw DataError("class " + std::to_string(cls) + " absent from incompatibility graph (" +
                    std::to_string(graph.num_classes) + " classes)");
  }
  std::vector<SparseMatrix::Triplet> t;
  for (int64_t i = 0; i < graph.grid_len; ++i) {
    const int64_t count = graph.set_size(cls, i);
    if (count == 0) continue;
    const double w = 1.0 / static_cast<double>(count);
    for (uint32_t tok = 0; tok < graph.codebook_size; ++tok) {
      if (graph.incompatible(cls, i, tok)) t.push_back({i, tok, w});
    }
  }
  return SparseOperator::make(
      SparseMatrix::from_triplets(graph.grid_len, graph.codebook_size, std::move(t)));
}

Tape::NodeId gcn_forward(Tape& tape, const SparseOperator& prop, Tape::NodeId codebook,
                         const GcnNodeIds& params) {
  Tape::NodeId h = codebook;
  for (int l = 0; l < 3; ++l) {
    h = tape.spmm(&prop, h);
    h = tape.matmul(h, params.w[l]);
    h = tape.add_rowvec(h, params.b[l]);
    if (l < 2) h = tape.relu(h);
  }
  return h;
}

Tape::NodeId negative_position_embedding(Tape& tape, const SparseOperator& selector,
                                         Tape::NodeId codebook, Tape::NodeId neg_w) {
  return tape.spmm(&selector, tape.matmul(codebook, neg_w));
}

Tensor gcn_forward_value(const SparseOperator& prop, const Tensor& codebook,
                         const GcnWeights& params) {
  Tape tape;
  GcnNodeIds ids;
  for (int l = 0; l < 3; ++l) {
    ids.w[l] = tape.constant(params.w[l]);
    ids.b[l] = tape.constant(params.b[l]);
  }
  return tape.value(gcn_forward(tape, prop, tape.constant(codebook), ids));
}

Tensor negative_position_embedding_value(const SparseOperator& selector, const Tensor& codebook,
                                         const Tensor& neg_w) {
  Tape tape;
  return tape.value(
      negative_position_embedding(tape, selector, tape.constant(codebook), tape.constant(neg_w)));
}

PriorPolicy parse_prior_policy(const std::string& s) {
  if (s == "precomputed") return PriorPolicy::kPrecomputed;
  if (s == "online") return PriorPolicy::kOnline;
  throw ConfigError("unknown prior policy '" + s + "' (want precomputed|online)");
}

std::string prior_policy_name(PriorPolicy p) {
  return p == PriorPolicy::kPrecomputed ? "precomputed" : "online";
}

PriorCache build_prior_cache(const CoocGraph& cooc, const SimGraph& sim,
                             const IncompatGraph& incompat, const Tensor& codebook,
                             const GcnWeights& gcn_cooc, const GcnWeights& gcn_sim,
                             const Tensor& neg_w, const PriorCachePolicy& policy) {
  PriorCache cache;
  cache.codebook_size = cooc.codebook_size;
  cache.grid_len = incompat.grid_len;
  cache.dim = codebook.dim(1);
  cache.num_classes = incompat.num_classes;
  cache.policy = policy;
  cache.cooc_digest = graph_digest(cooc);
  cache.sim_digest = graph_digest(sim);
  cache.incompat_digest = graph_digest(incompat);

  if (policy.cooc == PriorPolicy::kPrecomputed) {
    cache.cooc_embed = gcn_forward_value(cooc_propagation(cooc), codebook, gcn_cooc);
  }
  if (policy.sim == PriorPolicy::kPrecomputed) {
    cache.sim_embed = gcn_forward_value(sim_propagation(sim), codebook, gcn_sim);
  }
  if (policy.neg == PriorPolicy::kPrecomputed) {
    for (uint32_t c = 0; c < incompat.num_classes; ++c) {
      cache.neg_embed[c] =
          negative_position_embedding_value(incompat_selector(incompat, c), codebook, neg_w);
    }
  }
  return cache;
}

namespace {

constexpr char kCacheMagic[4] = {'K', 'A', 'P', 'C'};
constexpr uint32_t kCacheVersion = 1;

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
void put_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int64_t i = 0; i < t.rank(); ++i) put_u64(os, static_cast<uint64_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
}

struct BinReader {
  std::ifstream in;
  std::string path;

  uint32_t u32() {
    char b[4];
    if (!in.read(b, 4)) throw DataError(path + ": truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(b[i])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    char b[8];
    if (!in.read(b, 8)) throw DataError(path + ": truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(b[i])) << (8 * i);
    return v;
  }
  Tensor tensor() {
    const uint32_t rank = u32();
    if (rank > 8) throw DataError(path + ": implausible tensor rank");
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(u64());
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))))) {
      throw DataError(path + ": truncated tensor data");
    }
    return t;
  }
};

}  // namespace

void save_prior_cache(const PriorCache& cache, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(kCacheMagic, 4);
  put_u32(os, kCacheVersion);
  put_u32(os, cache.codebook_size);
  put_u64(os, static_cast<uint64_t>(cache.grid_len));
  put_u64(os, static_cast<uint64_t>(cache.dim));
  put_u32(os, cache.num_classes);
  put_u32(os, static_cast<uint32_t>(cache.policy.cooc));
  put_u32(os, static_cast<uint32_t>(cache.policy.sim));
  put_u32(os, static_cast<uint32_t>(cache.policy.neg));
  put_u64(os, cache.cooc_digest);
  put_u64(os, cache.sim_digest);
  put_u64(os, cache.incompat_digest);
  if (cache.policy.cooc == PriorPolicy::kPrecomputed) put_tensor(os, cache.cooc_embed);
  if (cache.policy.sim == PriorPolicy::kPrecomputed) put_tensor(os, cache.sim_embed);
  if (cache.policy.neg == PriorPolicy::kPrecomputed) {
    put_u32(os, static_cast<uint32_t>(cache.neg_embed.size()));
    for (const auto& [cls, t] : cache.neg_embed) {
      put_u32(os, cls);
      put_tensor(os, t);
    }
  }
  if (!os) throw DataError("short write to " + path);
}

PriorCache load_prior_cache(const std::string& path) {
  BinReader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) throw DataError("cannot open " + path);
  char magic[4];
  if (!r.in.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0) {
    throw DataError(path + ": not a prior cache file");
  }
  if (r.u32() != kCacheVersion) throw DataError(path + ": unsupported cache version");

  PriorCache cache;
  cache.codebook_size = r.u32();
  cache.grid_len = static_cast<int64_t>(r.u64());
  cache.dim = static_cast<int64_t>(r.u64());
  cache.num_classes = r.u32();
  cache.policy.cooc = static_cast<PriorPolicy>(r.u32());
  cache.policy.sim = static_cast<PriorPolicy>(r.u32());
  cache.policy.neg = static_cast<PriorPolicy>(r.u32());
  cache.cooc_digest = r.u64();
  cache.sim_digest = r.u64();
  cache.incompat_digest = r.u64();
  if (cache.policy.cooc == PriorPolicy::kPrecomputed) cache.cooc_embed = r.tensor();
  if (cache.policy.sim == PriorPolicy::kPrecomputed) cache.sim_embed = r.tensor();
  if (cache.policy.neg == PriorPolicy::kPrecomputed) {
    const uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) {
      const uint32_t cls = r.u32();
      cache.neg_embed[cls] = r.tensor();
    }
  }
  return cache;
}

}  // namespace kamg
