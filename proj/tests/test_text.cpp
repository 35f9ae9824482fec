#include <doctest.h>

#include <cstdio>
#include <fstream>

#include <quert/text.hpp>

using namespace quert;

TEST_CASE("vocab specials occupy fixed ids") {
  Vocab v;
  CHECK(v.size() == 5);
  CHECK(v.id("[PAD]") == Vocab::kPad);
  CHECK(v.id("[CLS]") == Vocab::kCls);
  CHECK(v.id("[SEP]") == Vocab::kSep);
  CHECK(v.id("[MASK]") == Vocab::kMask);
  CHECK(v.id("[UNK]") == Vocab::kUnk);
  CHECK(v.id("anything") == Vocab::kUnk);
  int id = v.add_token("tour");
  CHECK(id == 5);
  CHECK(v.add_token("tour") == 5);  // idempotent
  CHECK(v.token(5) == "tour");
  CHECK(v.is_special(Vocab::kMask));
  CHECK_FALSE(v.is_special(5));
}

TEST_CASE("build_vocab orders by frequency then lexicographically") {
  std::vector<QueryClickPair> corpus(2);
  corpus[0].query = "Hangzhou tour package";
  corpus[0].item_title = "package tour of Hangzhou";
  corpus[1].query = "cheap tour";
  corpus[1].item_title = "apple banana";
  Vocab v = build_vocab(corpus);
  // tour: 3, Hangzhou: 2, package: 2, rest: 1 (lexicographic within ties).
  CHECK(v.id("tour") == 5);
  CHECK(v.id("Hangzhou") == 6);
  CHECK(v.id("package") == 7);
  CHECK(v.id("apple") == 8);
  CHECK(v.id("banana") == 9);
  CHECK(v.id("cheap") == 10);
  CHECK(v.id("of") == 11);
  CHECK(v.size() == 12);

  Vocab v2 = build_vocab(corpus);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.token(static_cast<int>(i)) == v2.token(static_cast<int>(i)));
}

TEST_CASE("vocab file round-trip") {
  std::vector<QueryClickPair> corpus(1);
  corpus[0].query = "weekend cruise";
  corpus[0].item_title = "luxury weekend cruise deal";
  Vocab v = build_vocab(corpus);
  std::string path = "/tmp/quert_test_vocab.txt";
  v.save(path);
  Vocab w = Vocab::load(path);
  CHECK(w.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(w.token(static_cast<int>(i)) == v.token(static_cast<int>(i)));
  // Corrupt a special token line.
  {
    std::ofstream out(path);
    out << "[PAD]\n[CLS]\n[SEP]\n[XXX]\n[UNK]\n";
  }
  CHECK_THROWS_AS(Vocab::load(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("tokenize and detokenize round-trip") {
  std::vector<QueryClickPair> corpus(1);
  corpus[0].query = "package tour Hangzhou";
  corpus[0].item_title = "x";
  Vocab v = build_vocab(corpus);
  TokenizedText t = tokenize("package tour Hangzhou", v);
  REQUIRE(t.tokens.size() == 3);
  CHECK(t.tokens == std::vector<std::string>{"package", "tour", "Hangzhou"});
  CHECK(t.ids[0] == v.id("package"));
  CHECK(t.ids[2] == v.id("Hangzhou"));
  CHECK(detokenize(t.tokens) == "package tour Hangzhou");
  TokenizedText u = tokenize("  spaced   out ", v);
  CHECK(u.tokens == std::vector<std::string>{"spaced", "out"});
  CHECK(u.ids == std::vector<int>{Vocab::kUnk, Vocab::kUnk});
  CHECK(tokenize("", v).tokens.empty());
}

TEST_CASE("geo phrase detection is greedy longest-match") {
  Gazetteer gaz;
  gaz.add({"Hangzhou", GeoEntry::Kind::City, 30.25, 120.17, ""});
  gaz.add({"West", GeoEntry::Kind::City, 10.0, 10.0, ""});
  gaz.add({"West Lake", GeoEntry::Kind::Poi, 30.24, 120.15, "Hangzhou"});

  auto spans = detect_geo_phrases({"West", "Lake", "tour"}, gaz);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0] == std::pair<int, int>{0, 1});  // longest match wins over city "West"

  spans = detect_geo_phrases({"tour", "West", "cruise"}, gaz);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0] == std::pair<int, int>{1, 1});

  spans = detect_geo_phrases({"Hangzhou", "West", "Lake", "ticket"}, gaz);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == std::pair<int, int>{0, 0});
  CHECK(spans[1] == std::pair<int, int>{1, 2});

  CHECK(detect_geo_phrases({"plain", "query"}, gaz).empty());
  CHECK(detect_geo_phrases({}, gaz).empty());
}
