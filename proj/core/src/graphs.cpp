#include "kamg/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "kamg/digest.hpp"
#include "kamg/errors.hpp"

namespace kamg {

namespace {

uint64_t pack_pair(uint32_t a, uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(a) << 32) | b;
}

// Runs fn(chunk_begin, chunk_end, chunk_index) over [0, n) and lets the
// caller merge per-chunk results in chunk order, which keeps every mining
// output bit-identical to a serial scan (integer counts commute exactly).
template <typename Fn>
void for_chunks(size_t n, int num_threads, Fn&& fn) {
  const size_t chunks = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(num_threads), n));
  if (chunks == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> workers;
  for (size_t c = 0; c < chunks; ++c) {
    const size_t begin = n * c / chunks;
    const size_t end = n * (c + 1) / chunks;
    workers.emplace_back([&fn, begin, end, c] { fn(begin, end, c); });
  }
  for (auto& w : workers) w.join();
}

void require_nonempty(const Corpus& corpus, const char* op) {
  if (corpus.grids.empty()) throw DataError(std::string(op) + ": empty corpus");
}

std::string format_value(double v, bool as_integer) {
  char buf[40];
  if (as_integer) {
    std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
  } else {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
  }
  return buf;
}

}  // namespace

uint64_t cooc_pairs_per_grid(int64_t height, int64_t width) {
  const uint64_t h = static_cast<uint64_t>(height), w = static_cast<uint64_t>(width);
  return h * (w - 1) + w * (h - 1) + 2 * (h - 1) * (w - 1);
}

CoocGraph mine_cooccurrence(const Corpus& corpus, uint64_t prune_min_count, bool count_self_pairs,
                            int num_threads) {
  require_nonempty(corpus, "mine_cooccurrence");
  const int64_t h = corpus.header.height, w = corpus.header.width;

  std::vector<std::unordered_map<uint64_t, uint64_t>> partial(
      std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(num_threads), corpus.grids.size())));
  for_chunks(corpus.grids.size(), num_threads, [&](size_t begin, size_t end, size_t chunk) {
    auto& counts = partial[chunk];
    for (size_t gi = begin; gi < end; ++gi) {
      const auto& tok = corpus.grids[gi].tokens;
      for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
          const uint32_t a = tok[static_cast<size_t>(i * w + j)];
          // right, down, down-right, down-left: each unordered adjacent pair once
          if (j + 1 < w) counts[pack_pair(a, tok[static_cast<size_t>(i * w + j + 1)])]++;
          if (i + 1 < h) counts[pack_pair(a, tok[static_cast<size_t>((i + 1) * w + j)])]++;
          if (i + 1 < h && j + 1 < w)
            counts[pack_pair(a, tok[static_cast<size_t>((i + 1) * w + j + 1)])]++;
          if (i + 1 < h && j > 0)
            counts[pack_pair(a, tok[static_cast<size_t>((i + 1) * w + j - 1)])]++;
        }
      }
    }
  });

  std::unordered_map<uint64_t, uint64_t> merged;
  for (const auto& p : partial)
    for (const auto& [key, n] : p) merged[key] += n;

  CoocGraph g;
  g.codebook_size = corpus.header.codebook_size;
  g.prune_min_count = prune_min_count;
  g.count_self_pairs = count_self_pairs;
  for (const auto& [key, n] : merged) {
    const uint32_t a = static_cast<uint32_t>(key >> 32);
    const uint32_t b = static_cast<uint32_t>(key & 0xFFFFFFFFU);
    if (!count_self_pairs && a == b) continue;
    if (n < prune_min_count) continue;
    g.entries[{a, b}] = static_cast<double>(n);
  }
  return g;
}

CoocGraph normalize_cooccurrence(CoocGraph graph) {
  if (graph.normalized) return graph;
  std::vector<double> degree(graph.codebook_size, 0.0);
  for (const auto& [key, count] : graph.entries) {
    degree[key.first] += count;
    if (key.second != key.first) degree[key.second] += count;
  }
  std::map<std::pair<uint32_t, uint32_t>, double> weights;
  for (const auto& [key, count] : graph.entries) {
    weights[key] = count / std::sqrt(degree[key.first] * degree[key.second]);
  }
  for (uint32_t t = 0; t < graph.codebook_size; ++t) {
    if (degree[t] == 0.0) weights[{t, t}] = 1.0;  // isolated token: unit self-loop
  }
  graph.entries = std::move(weights);
  graph.normalized = true;
  return graph;
}

PositionDistribution position_distribution(const Corpus& corpus, double smoothing_epsilon,
                                           int num_threads) {
  require_nonempty(corpus, "position_distribution");
  if (!(smoothing_epsilon > 0.0)) throw ConfigError("smoothing epsilon must be > 0");

  const uint32_t k = corpus.header.codebook_size;
  const int64_t n = corpus.header.grid_len();

  std::vector<std::vector<uint64_t>> partial(
      std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(num_threads), corpus.grids.size())));
  for (auto& p : partial) p.assign(static_cast<size_t>(k) * static_cast<size_t>(n), 0);
  for_chunks(corpus.grids.size(), num_threads, [&](size_t begin, size_t end, size_t chunk) {
    auto& counts = partial[chunk];
    for (size_t gi = begin; gi < end; ++gi) {
      const auto& tok = corpus.grids[gi].tokens;
      for (int64_t i = 0; i < n; ++i) {
        counts[static_cast<size_t>(tok[static_cast<size_t>(i)]) * static_cast<size_t>(n) +
               static_cast<size_t>(i)]++;
      }
    }
  });
  std::vector<uint64_t> counts(static_cast<size_t>(k) * static_cast<size_t>(n), 0);
  for (const auto& p : partial)
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += p[i];

  PositionDistribution dist;
  dist.codebook_size = k;
  dist.grid_len = n;
  dist.epsilon = smoothing_epsilon;
  dist.totals.assign(k, 0);
  dist.probs.assign(counts.size(), 0.0);
  for (uint32_t t = 0; t < k; ++t) {
    uint64_t total = 0;
    for (int64_t i = 0; i < n; ++i) total += counts[static_cast<size_t>(t) * n + i];
    dist.totals[t] = total;
    const double denom = static_cast<double>(total) + smoothing_epsilon * static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      dist.probs[static_cast<size_t>(t) * n + i] =
          (static_cast<double>(counts[static_cast<size_t>(t) * n + i]) + smoothing_epsilon) /
          denom;
    }
  }
  return dist;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ContractError("js_divergence length mismatch: " + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()));
  }
  double js = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return js;
}

SimGraph mine_similarity(const PositionDistribution& dist, int top_k, int num_threads) {
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (dist.codebook_size <= static_cast<uint32_t>(top_k)) {
    throw ConfigError("codebook size " + std::to_string(dist.codebook_size) +
                      " must exceed top_k " + std::to_string(top_k));
  }

  std::vector<uint32_t> occurring;
  for (uint32_t t = 0; t < dist.codebook_size; ++t) {
    if (dist.totals[t] > 0) occurring.push_back(t);
  }

  SimGraph g;
  g.codebook_size = dist.codebook_size;
  g.grid_len = dist.grid_len;
  g.top_k = top_k;
  g.edges.resize(dist.codebook_size);
  g.farthest.assign(dist.codebook_size, {});

  // Only tokens seen in the corpus are meaningful sources or candidates;
  // smoothed rows of absent tokens are all uniform.
  for_chunks(occurring.size(), num_threads, [&](size_t begin, size_t end, size_t) {
    std::vector<std::pair<double, uint32_t>> cand;
    for (size_t si = begin; si < end; ++si) {
      const uint32_t src = occurring[si];
      cand.clear();
      cand.reserve(occurring.size() - 1);
      for (uint32_t dst : occurring) {
        if (dst == src) continue;
        cand.emplace_back(js_divergence(dist.row(src), dist.row(dst)), dst);
      }
      if (cand.empty()) continue;
      const size_t keep = std::min<size_t>(static_cast<size_t>(top_k), cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<ptrdiff_t>(keep), cand.end());
      auto& out = g.edges[src];
      for (size_t i = 0; i < keep; ++i) out.push_back({cand[i].second, cand[i].first});
      auto far = std::max_element(cand.begin(), cand.end(),
                                  [](const auto& a, const auto& b) {
                                    if (a.first != b.first) return a.first < b.first;
                                    return a.second > b.second;  // ties: keep smaller id
                                  });
      g.farthest[src] = {far->second, far->first};
    }
  });
  return g;
}

int64_t IncompatGraph::set_size(uint32_t cls, int64_t position) const {
  int64_t n = 0;
  for (uint32_t t = 0; t < codebook_size; ++t) n += incompatible(cls, position, t) ? 1 : 0;
  return n;
}

IncompatGraph mine_incompatibility(const Corpus& corpus, int num_threads) {
  require_nonempty(corpus, "mine_incompatibility");
  const uint32_t k = corpus.header.codebook_size;
  const int64_t n = corpus.header.grid_len();
  const uint32_t classes = corpus.header.num_classes;

  IncompatGraph g;
  g.codebook_size = k;
  g.grid_len = n;
  g.num_classes = classes;
  const size_t stride = g.row_stride();

  // seen bitmaps, merged across chunks with bitwise or (commutative).
  std::vector<std::vector<std::vector<uint8_t>>> partial(
      std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(num_threads), corpus.grids.size())));
  for (auto& per_chunk : partial) {
    per_chunk.assign(classes, std::vector<uint8_t>(static_cast<size_t>(n) * stride, 0));
  }
  std::vector<uint64_t> class_grid_count(classes, 0);
  for (const TokenGrid& grid : corpus.grids) class_grid_count[grid.class_label]++;

  for_chunks(corpus.grids.size(), num_threads, [&](size_t begin, size_t end, size_t chunk) {
    auto& seen = partial[chunk];
    for (size_t gi = begin; gi < end; ++gi) {
      const TokenGrid& grid = corpus.grids[gi];
      auto& rows = seen[grid.class_label];
      for (int64_t i = 0; i < n; ++i) {
        const uint16_t t = grid.tokens[static_cast<size_t>(i)];
        rows[static_cast<size_t>(i) * stride + t / 8] |= static_cast<uint8_t>(1u << (t % 8));
      }
    }
  });

  g.bits.assign(classes, std::vector<uint8_t>(static_cast<size_t>(n) * stride, 0));
  for (uint32_t c = 0; c < classes; ++c) {
    std::vector<uint8_t> seen(static_cast<size_t>(n) * stride, 0);
    for (const auto& per_chunk : partial)
      for (size_t i = 0; i < seen.size(); ++i) seen[i] |= per_chunk[c][i];
    // incompatible = never seen; mask bits beyond codebook_size off
    for (int64_t i = 0; i < n; ++i) {
      for (uint32_t t = 0; t < k; ++t) {
        if (!((seen[static_cast<size_t>(i) * stride + t / 8] >> (t % 8)) & 1)) {
          g.bits[c][static_cast<size_t>(i) * stride + t / 8] |=
              static_cast<uint8_t>(1u << (t % 8));
        }
      }
    }
    if (class_grid_count[c] == 0) g.empty_classes.push_back(c);
  }
  return g;
}

// --- serialization ----------------------------------------------------------

namespace {

void write_cooc(std::ostream& os, const CoocGraph& g) {
  os << "kamg-graph\tcooc\tK=" << g.codebook_size << "\tnormalized=" << (g.normalized ? 1 : 0)
     << "\tprune_min_count=" << g.prune_min_count << "\tself_pairs=" << (g.count_self_pairs ? 1 : 0)
     << "\tedges=" << g.entries.size() << "\n";
  for (const auto& [key, value] : g.entries) {
    os << key.first << '\t' << key.second << '\t' << format_value(value, !g.normalized) << "\n";
  }
}

void write_sim(std::ostream& os, const SimGraph& g) {
  size_t sources = 0;
  for (const auto& e : g.edges) sources += e.empty() ? 0 : 1;
  os << "kamg-graph\tsim\tK=" << g.codebook_size << "\tN=" << g.grid_len << "\ttop_k=" << g.top_k
     << "\tsources=" << sources << "\n";
  for (uint32_t src = 0; src < g.codebook_size; ++src) {
    for (const auto& e : g.edges[src]) {
      os << src << '\t' << e.target << '\t' << format_value(e.divergence, false) << "\n";
    }
  }
  for (uint32_t src = 0; src < g.codebook_size; ++src) {
    if (g.edges[src].empty()) continue;
    os << "far\t" << src << '\t' << g.farthest[src].target << '\t'
       << format_value(g.farthest[src].divergence, false) << "\n";
  }
}

void write_incompat(std::ostream& os, const IncompatGraph& g) {
  os << "kamg-graph\tincompat\tK=" << g.codebook_size << "\tN=" << g.grid_len
     << "\tclasses=" << g.num_classes << "\tempty=";
  for (size_t i = 0; i < g.empty_classes.size(); ++i) {
    if (i) os << ',';
    os << g.empty_classes[i];
  }
  os << "\n";
  static const char* hexd = "0123456789abcdef";
  const size_t stride = g.row_stride();
  for (uint32_t c = 0; c < g.num_classes; ++c) {
    os << "class\t" << c << "\n";
    for (int64_t i = 0; i < g.grid_len; ++i) {
      std::string line(stride * 2, '0');
      for (size_t b = 0; b < stride; ++b) {
        const uint8_t byte = g.bits[c][static_cast<size_t>(i) * stride + b];
        line[2 * b] = hexd[byte >> 4];
        line[2 * b + 1] = hexd[byte & 0xF];
      }
      os << line << "\n";
    }
  }
}

class LineParser {
 public:
  LineParser(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open " + path);
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++lineno_;
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_ + ":" + std::to_string(lineno_) + ": " + what);
  }

  std::vector<std::string> fields(const std::string& line) const {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
      const size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        out.push_back(line.substr(start));
        break;
      }
      out.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    return out;
  }

  uint64_t parse_u64(const std::string& s) const {
    try {
      size_t pos = 0;
      const uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) fail("trailing characters in integer '" + s + "'");
      return v;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      fail("expected integer, got '" + s + "'");
    }
  }

  double parse_f64(const std::string& s) const {
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) fail("trailing characters in number '" + s + "'");
      return v;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      fail("expected number, got '" + s + "'");
    }
  }

  // header line: kamg-graph TYPE key=value ...
  std::map<std::string, std::string> parse_header(const std::string& line,
                                                  const std::string& want_type) {
    const auto f = fields(line);
    if (f.size() < 2 || f[0] != "kamg-graph") fail("not a kamg-graph header");
    if (f[1] != want_type) fail("graph type '" + f[1] + "', expected '" + want_type + "'");
    std::map<std::string, std::string> kv;
    for (size_t i = 2; i < f.size(); ++i) {
      const size_t eq = f[i].find('=');
      if (eq == std::string::npos) fail("malformed header field '" + f[i] + "'");
      kv[f[i].substr(0, eq)] = f[i].substr(eq + 1);
    }
    return kv;
  }

 private:
  std::string path_;
  std::ifstream in_;
  size_t lineno_ = 0;
};

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << contents;
  if (!f) throw DataError("short write to " + path);
}

}  // namespace

void export_graph(const CoocGraph& g, const std::string& path) {
  std::ostringstream os;
  write_cooc(os, g);
  write_file(path, os.str());
}

void export_graph(const SimGraph& g, const std::string& path) {
  std::ostringstream os;
  write_sim(os, g);
  write_file(path, os.str());
}

void export_graph(const IncompatGraph& g, const std::string& path) {
  std::ostringstream os;
  write_incompat(os, g);
  write_file(path, os.str());
}

CoocGraph import_cooc_graph(const std::string& path) {
  LineParser p(path);
  std::string line;
  if (!p.next(line)) p.fail("empty file");
  auto kv = p.parse_header(line, "cooc");
  CoocGraph g;
  g.codebook_size = static_cast<uint32_t>(p.parse_u64(kv.at("K")));
  g.normalized = p.parse_u64(kv.at("normalized")) != 0;
  g.prune_min_count = p.parse_u64(kv.at("prune_min_count"));
  g.count_self_pairs = p.parse_u64(kv.at("self_pairs")) != 0;
  const uint64_t edges = p.parse_u64(kv.at("edges"));
  while (p.next(line)) {
    const auto f = p.fields(line);
    if (f.size() != 3) p.fail("expected 3 tab-separated fields");
    const uint32_t a = static_cast<uint32_t>(p.parse_u64(f[0]));
    const uint32_t b = static_cast<uint32_t>(p.parse_u64(f[1]));
    if (a > b) p.fail("edge not in canonical order");
    if (b >= g.codebook_size) p.fail("token id out of range");
    g.entries[{a, b}] = g.normalized ? p.parse_f64(f[2]) : static_cast<double>(p.parse_u64(f[2]));
  }
  if (g.entries.size() != edges) {
    throw DataError(path + ": header claims " + std::to_string(edges) + " edges, found " +
                    std::to_string(g.entries.size()));
  }
  return g;
}

SimGraph import_sim_graph(const std::string& path) {
  LineParser p(path);
  std::string line;
  if (!p.next(line)) p.fail("empty file");
  auto kv = p.parse_header(line, "sim");
  SimGraph g;
  g.codebook_size = static_cast<uint32_t>(p.parse_u64(kv.at("K")));
  g.grid_len = static_cast<int64_t>(p.parse_u64(kv.at("N")));
  g.top_k = static_cast<int>(p.parse_u64(kv.at("top_k")));
  g.edges.resize(g.codebook_size);
  g.farthest.assign(g.codebook_size, {});
  while (p.next(line)) {
    const auto f = p.fields(line);
    if (f.size() == 4 && f[0] == "far") {
      const uint32_t src = static_cast<uint32_t>(p.parse_u64(f[1]));
      if (src >= g.codebook_size) p.fail("token id out of range");
      g.farthest[src] = {static_cast<uint32_t>(p.parse_u64(f[2])), p.parse_f64(f[3])};
    } else if (f.size() == 3) {
      const uint32_t src = static_cast<uint32_t>(p.parse_u64(f[0]));
      const uint32_t dst = static_cast<uint32_t>(p.parse_u64(f[1]));
      if (src >= g.codebook_size || dst >= g.codebook_size) p.fail("token id out of range");
      g.edges[src].push_back({dst, p.parse_f64(f[2])});
    } else {
      p.fail("expected edge or far line");
    }
  }
  return g;
}

IncompatGraph import_incompat_graph(const std::string& path) {
  LineParser p(path);
  std::string line;
  if (!p.next(line)) p.fail("empty file");
  auto kv = p.parse_header(line, "incompat");
  IncompatGraph g;
  g.codebook_size = static_cast<uint32_t>(p.parse_u64(kv.at("K")));
  g.grid_len = static_cast<int64_t>(p.parse_u64(kv.at("N")));
  g.num_classes = static_cast<uint32_t>(p.parse_u64(kv.at("classes")));
  const std::string empty = kv.at("empty");
  for (size_t start = 0; start < empty.size();) {
    const size_t comma = empty.find(',', start);
    const std::string tok =
        comma == std::string::npos ? empty.substr(start) : empty.substr(start, comma - start);
    g.empty_classes.push_back(static_cast<uint32_t>(p.parse_u64(tok)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  const size_t stride = g.row_stride();
  g.bits.assign(g.num_classes, std::vector<uint8_t>(static_cast<size_t>(g.grid_len) * stride, 0));
  for (uint32_t c = 0; c < g.num_classes; ++c) {
    if (!p.next(line)) p.fail("missing class section");
    const auto f = p.fields(line);
    if (f.size() != 2 || f[0] != "class" || p.parse_u64(f[1]) != c) {
      p.fail("expected 'class\t" + std::to_string(c) + "'");
    }
    for (int64_t i = 0; i < g.grid_len; ++i) {
      if (!p.next(line)) p.fail("missing bitmap row");
      if (line.size() != stride * 2) p.fail("bitmap row has wrong length");
      for (size_t b = 0; b < stride; ++b) {
        auto nibble = [&](char ch) -> uint8_t {
          if (ch >= '0' && ch <= '9') return static_cast<uint8_t>(ch - '0');
          if (ch >= 'a' && ch <= 'f') return static_cast<uint8_t>(ch - 'a' + 10);
          p.fail(std::string("bad hex digit '") + ch + "'");
        };
        g.bits[c][static_cast<size_t>(i) * stride + b] =
            static_cast<uint8_t>((nibble(line[2 * b]) << 4) | nibble(line[2 * b + 1]));
      }
    }
  }
  if (p.next(line)) p.fail("trailing content");
  return g;
}

namespace {
template <typename G>
uint64_t digest_of(const G& g) {
  std::ostringstream os;
  if constexpr (std::is_same_v<G, CoocGraph>) {
    write_cooc(os, g);
  } else if constexpr (std::is_same_v<G, SimGraph>) {
    write_sim(os, g);
  } else {
    write_incompat(os, g);
  }
  return fnv1a64(os.str());
}
}  // namespace

uint64_t graph_digest(const CoocGraph& g) { return digest_of(g); }
uint64_t graph_digest(const SimGraph& g) { return digest_of(g); }
uint64_t graph_digest(const IncompatGraph& g) { return digest_of(g); }

}  // namespace kamg
