#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kamg/corpus.hpp"
#include "kamg/errors.hpp"
#include "kamg/synthetic.hpp"
#include "oracle_ref.hpp"

using namespace kamg;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("kamg_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Corpus tiny_corpus() {
  Corpus c;
  c.header.codebook_size = 4;
  c.header.height = 1;
  c.header.width = 2;
  c.header.num_classes = 1;
  c.header.num_grids = 1;
  c.grids.push_back({0, {3, 1}});
  return c;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("byte layout of a one-grid file") {
    // header 4+4+4+2+2+4+8 = 28 bytes, grid 4 + 2*2 = 8 bytes
    const std::string path = temp_path("layout.kamg");
    write_corpus(tiny_corpus(), path);
    const std::string bytes = slurp(path);
    REQUIRE(bytes.size() == 36);
    CHECK(bytes.substr(0, 4) == "KAMG");
    // version 1, K=4 little-endian
    CHECK(static_cast<uint8_t>(bytes[4]) == 1);
    CHECK(static_cast<uint8_t>(bytes[8]) == 4);
    // tokens 3, 1 as u16 LE at offsets 32, 34
    CHECK(static_cast<uint8_t>(bytes[32]) == 3);
    CHECK(static_cast<uint8_t>(bytes[34]) == 1);
    fs::remove(path);
  }

  TEST_CASE("zero grids gives a header-only file") {
    Corpus c = tiny_corpus();
    c.grids.clear();
    c.header.num_grids = 0;
    const std::string path = temp_path("empty.kamg");
    write_corpus(c, path);
    CHECK(slurp(path).size() == 28);
    const Corpus back = read_corpus(path);
    CHECK(back.header.num_grids == 0);
    CHECK(back.grids.empty());
    fs::remove(path);
  }

  TEST_CASE("write then read round trips") {
    Rng rng(5);
    const Corpus c = oracle::random_corpus(rng, 30, 6, 6, 3, 20);
    const std::string path = temp_path("roundtrip.kamg");
    write_corpus(c, path);
    const Corpus back = read_corpus(path);
    CHECK(back.header.codebook_size == c.header.codebook_size);
    CHECK(back.header.height == c.header.height);
    CHECK(back.header.width == c.header.width);
    CHECK(back.header.num_classes == c.header.num_classes);
    REQUIRE(back.grids.size() == c.grids.size());
    for (size_t i = 0; i < c.grids.size(); ++i) {
      CHECK(back.grids[i].class_label == c.grids[i].class_label);
      CHECK(back.grids[i].tokens == c.grids[i].tokens);
    }
    fs::remove(path);
  }

  TEST_CASE("inconsistent grid is rejected with its index") {
    Corpus c = tiny_corpus();
    c.grids.push_back({0, {9, 0}});  // token 9 >= K=4
    c.header.num_grids = 2;
    const std::string path = temp_path("badgrid.kamg");
    CHECK_THROWS_WITH_AS(write_corpus(c, path), doctest::Contains("grid 1"), DataError);
  }

  TEST_CASE("bad magic is a format error") {
    const std::string path = temp_path("badmagic.kamg");
    std::ofstream(path, std::ios::binary) << "NOPE-not-a-corpus";
    CHECK_THROWS_WITH_AS(read_corpus(path), doctest::Contains("magic"), DataError);
    fs::remove(path);
  }

  TEST_CASE("corrupt token id reports its byte offset") {
    const std::string path = temp_path("corrupt.kamg");
    write_corpus(tiny_corpus(), path);
    std::string bytes = slurp(path);
    bytes[32] = static_cast<char>(200);  // first token -> 200 >= K
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    CHECK_THROWS_WITH_AS(read_corpus(path), doctest::Contains("offset 32"), DataError);
    fs::remove(path);
  }

  TEST_CASE("split arithmetic and determinism") {
    Rng rng(9);
    Corpus c = oracle::random_corpus(rng, 10, 3, 3, 2, 1);
    c.grids.clear();
    for (uint64_t i = 0; i < 10; ++i) {
      TokenGrid g;
      g.class_label = 0;
      g.tokens.assign(static_cast<size_t>(c.header.grid_len()), static_cast<uint16_t>(i % 2));
      c.grids.push_back(g);
    }
    c.header.num_classes = 2;
    c.header.num_grids = 10;

    const CorpusSplit s1 = split_corpus(c, 0.2, 77);
    CHECK(s1.train.grids.size() == 8);
    CHECK(s1.heldout.grids.size() == 2);

    const CorpusSplit s2 = split_corpus(c, 0.2, 77);
    for (size_t i = 0; i < s1.train.grids.size(); ++i) {
      CHECK(s1.train.grids[i].tokens == s2.train.grids[i].tokens);
    }

    CHECK_THROWS_AS(split_corpus(c, 1.5, 1), ConfigError);
  }

  TEST_CASE("split is a partition") {
    Corpus c;
    c.header.codebook_size = 300;  // one distinct token per grid
    c.header.height = 1;
    c.header.width = 1;
    c.header.num_classes = 1;
    c.header.num_grids = 25;
    for (uint16_t i = 0; i < 25; ++i) c.grids.push_back({0, {i}});

    const CorpusSplit s = split_corpus(c, 0.4, 3);
    std::vector<int> seen(25, 0);
    for (const auto& g : s.train.grids) seen[g.tokens[0]]++;
    for (const auto& g : s.heldout.grids) seen[g.tokens[0]]++;
    for (int count : seen) CHECK(count == 1);
    CHECK(s.heldout.grids.size() == 10);
  }
}

TEST_SUITE("synthetic") {
  TEST_CASE("degenerate coherence yields constant grids") {
    SynthConfig c;
    c.codebook_size = 2;
    c.height = 3;
    c.width = 4;
    c.num_classes = 1;
    c.num_grids = 10;
    c.seed = 1;
    c.horizontal_coherence = 1.0;
    c.regions.push_back({0, 0, 0, 3, 4, 1, 2});  // single-token vocabulary {1}
    const Corpus corpus = generate_synthetic(c);
    for (const auto& g : corpus.grids) {
      for (uint16_t t : g.tokens) CHECK(t == 1);
    }
  }

  TEST_CASE("class vocabularies never cross") {
    const SynthConfig c = make_band_layout(16, 4, 4, 2, 200, 5, 0.5, 2, 1);
    const Corpus corpus = generate_synthetic(c);
    // class 0 owns tokens [0,8), class 1 owns [8,16)
    for (const auto& g : corpus.grids) {
      for (uint16_t t : g.tokens) {
        if (g.class_label == 0) CHECK(t < 8);
        if (g.class_label == 1) CHECK(t >= 8);
      }
    }
  }

  TEST_CASE("generation is reproducible bit for bit") {
    const SynthConfig c = make_band_layout(32, 4, 4, 2, 50, 99, 0.4, 2, 1);
    const Corpus a = generate_synthetic(c);
    const Corpus b = generate_synthetic(c);
    REQUIRE(a.grids.size() == b.grids.size());
    for (size_t i = 0; i < a.grids.size(); ++i) {
      CHECK(a.grids[i].class_label == b.grids[i].class_label);
      CHECK(a.grids[i].tokens == b.grids[i].tokens);
    }
  }

  TEST_CASE("planted synonyms have near-identical positional distributions") {
    // pair (0,1) is planted; token 2 lives in the same region but is free
    const SynthConfig c = make_band_layout(16, 4, 4, 1, 10000, 12, 0.3, 1, 1);
    REQUIRE(c.synonym_pairs.size() == 1);
    REQUIRE(c.synonym_pairs[0].first == 0);
    REQUIRE(c.synonym_pairs[0].second == 1);
    const Corpus corpus = generate_synthetic(c);
    const auto rows = oracle::position_rows(corpus, 1.0);
    const double js_pair = oracle::js_entropy_form(rows[0], rows[1]);
    CHECK(js_pair < 0.05);
    // against a non-synonym the divergence must be clearly larger: tokens in
    // a single-band layout share the region, so compare against the planted
    // pair's bound rather than each other... use a token from a fresh layout
    // with two bands so positions differ.
    const SynthConfig c2 = make_band_layout(16, 4, 4, 1, 10000, 12, 0.3, 2, 1);
    const Corpus corpus2 = generate_synthetic(c2);
    const auto rows2 = oracle::position_rows(corpus2, 1.0);
    // token 0 (top band) vs token 8 (bottom band): disjoint positions
    const double js_far = oracle::js_entropy_form(rows2[0], rows2[8]);
    CHECK(js_far > 0.05);
    const double js_pair2 = oracle::js_entropy_form(rows2[0], rows2[1]);
    CHECK(js_pair2 < 0.05);
  }

  TEST_CASE("invalid tiling is a config error") {
    SynthConfig c;
    c.codebook_size = 4;
    c.height = 2;
    c.width = 2;
    c.num_classes = 1;
    c.num_grids = 1;
    c.regions.push_back({0, 0, 0, 1, 2, 0, 2});  // covers only the top row
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);

    SynthConfig d = c;
    d.regions.push_back({0, 1, 0, 1, 2, 0, 2});  // overlapping vocabulary
    CHECK_THROWS_AS(generate_synthetic(d), ConfigError);
  }

  TEST_CASE("synonym pair may not straddle a region boundary") {
    SynthConfig c;
    c.codebook_size = 8;
    c.height = 2;
    c.width = 2;
    c.num_classes = 1;
    c.num_grids = 1;
    c.regions.push_back({0, 0, 0, 1, 2, 0, 4});
    c.regions.push_back({0, 1, 0, 1, 2, 4, 8});
    c.synonym_pairs.emplace_back(3, 4);  // crosses the two vocabularies
    CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
  }
}
