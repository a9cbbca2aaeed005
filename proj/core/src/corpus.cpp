#include "kamg/corpus.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "kamg/errors.hpp"

namespace kamg {

namespace {

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  uint16_t u16() { return static_cast<uint16_t>(byte() | (byte() << 8)); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return v;
  }
  size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  uint32_t byte() {
    if (pos_ >= bytes_.size()) {
      throw DataError(path_ + ": truncated at byte offset " + std::to_string(pos_));
    }
    return static_cast<uint8_t>(bytes_[pos_++]);
  }

  const std::string& bytes_;
  const std::string& path_;
  size_t pos_ = 0;
};

void validate_grid(const CorpusHeader& h, const TokenGrid& g, size_t index) {
  if (g.class_label >= h.num_classes) {
    throw DataError("grid " + std::to_string(index) + ": class label " +
                    std::to_string(g.class_label) + " >= num_classes " +
                    std::to_string(h.num_classes));
  }
  if (static_cast<int64_t>(g.tokens.size()) != h.grid_len()) {
    throw DataError("grid " + std::to_string(index) + ": " + std::to_string(g.tokens.size()) +
                    " tokens, expected " + std::to_string(h.grid_len()));
  }
  for (uint16_t t : g.tokens) {
    if (t >= h.codebook_size) {
      throw DataError("grid " + std::to_string(index) + ": token id " + std::to_string(t) +
                      " >= codebook size " + std::to_string(h.codebook_size));
    }
  }
}

void validate_header(const CorpusHeader& h) {
  if (h.codebook_size < 2) throw DataError("codebook size must be >= 2");
  if (h.codebook_size > 65535) throw DataError("codebook size must fit 16-bit token ids");
  if (h.grid_len() < 1) throw DataError("grid must have at least one cell");
  if (h.num_classes < 1) throw DataError("num_classes must be >= 1");
}

}  // namespace

void write_corpus(const CorpusHeader& header, const std::vector<TokenGrid>& grids,
                  const std::string& path) {
  validate_header(header);
  if (grids.size() != header.num_grids) {
    throw DataError("header claims " + std::to_string(header.num_grids) + " grids, got " +
                    std::to_string(grids.size()));
  }
  for (size_t i = 0; i < grids.size(); ++i) validate_grid(header, grids[i], i);

  std::string out;
  out.reserve(28 + grids.size() * (4 + static_cast<size_t>(header.grid_len()) * 2));
  out.append(kCorpusMagic, 4);
  put_u32(out, header.version);
  put_u32(out, header.codebook_size);
  put_u16(out, header.height);
  put_u16(out, header.width);
  put_u32(out, header.num_classes);
  put_u64(out, header.num_grids);
  for (const TokenGrid& g : grids) {
    put_u32(out, g.class_label);
    for (uint16_t t : g.tokens) put_u16(out, t);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to " + path);
}

Corpus read_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCorpusMagic, 4) != 0) {
    throw DataError(path + ": bad magic, not a corpus file");
  }
  ByteReader rd(bytes, path);
  rd.u32();  // magic bytes, validated above

  Corpus c;
  c.header.version = rd.u32();
  if (c.header.version != kCorpusVersion) {
    throw DataError(path + ": unsupported corpus version " + std::to_string(c.header.version));
  }
  c.header.codebook_size = rd.u32();
  c.header.height = rd.u16();
  c.header.width = rd.u16();
  c.header.num_classes = rd.u32();
  c.header.num_grids = rd.u64();
  validate_header(c.header);

  const int64_t n = c.header.grid_len();
  c.grids.reserve(c.header.num_grids);
  for (uint64_t gi = 0; gi < c.header.num_grids; ++gi) {
    TokenGrid g;
    g.class_label = rd.u32();
    if (g.class_label >= c.header.num_classes) {
      throw DataError(path + ": grid " + std::to_string(gi) + " class label " +
                      std::to_string(g.class_label) + " out of range at byte offset " +
                      std::to_string(rd.offset() - 4));
    }
    g.tokens.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const size_t off = rd.offset();
      const uint16_t t = rd.u16();
      if (t >= c.header.codebook_size) {
        throw DataError(path + ": corrupt token id " + std::to_string(t) + " at byte offset " +
                        std::to_string(off));
      }
      g.tokens[static_cast<size_t>(i)] = t;
    }
    c.grids.push_back(std::move(g));
  }
  if (!rd.at_end()) {
    throw DataError(path + ": trailing bytes after grid " + std::to_string(c.header.num_grids));
  }
  return c;
}

CorpusSplit split_corpus(const Corpus& corpus, double heldout_fraction, uint64_t seed) {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    throw ConfigError("heldout fraction must be in (0,1), got " +
                      std::to_string(heldout_fraction));
  }
  const size_t n = corpus.grids.size();
  if (n < 2) throw DataError("split needs at least 2 grids");

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (size_t i = n - 1; i > 0; --i) {
    const size_t j = static_cast<size_t>(rng.below(i + 1));
    std::swap(order[i], order[j]);
  }

  const auto heldout_count =
      static_cast<size_t>(std::llround(heldout_fraction * static_cast<double>(n)));
  CorpusSplit s;
  s.heldout.header = corpus.header;
  s.train.header = corpus.header;
  for (size_t i = 0; i < n; ++i) {
    (i < heldout_count ? s.heldout : s.train).grids.push_back(corpus.grids[order[i]]);
  }
  s.heldout.header.num_grids = s.heldout.grids.size();
  s.train.header.num_grids = s.train.grids.size();
  return s;
}

}  // namespace kamg
