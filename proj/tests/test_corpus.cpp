#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <quert/corpus.hpp>
#include <quert/text.hpp>

using namespace quert;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/quert_test_") + name;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("gazetteer add validates entries") {
  Gazetteer gaz;
  gaz.add({"Hangzhou", GeoEntry::Kind::City, 30.25, 120.17, ""});
  CHECK_THROWS_AS(gaz.add({"Hangzhou", GeoEntry::Kind::City, 1, 1, ""}), std::invalid_argument);
  CHECK_THROWS_AS(gaz.add({"BadLat", GeoEntry::Kind::City, 95.0, 0, ""}), std::out_of_range);
  CHECK_THROWS_AS(gaz.add({"West Lake", GeoEntry::Kind::Poi, 30.24, 120.15, "Nowhere"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaz.add({"Far Lake", GeoEntry::Kind::Poi, 35.0, 120.17, "Hangzhou"}),
                  std::invalid_argument);
  gaz.add({"West Lake", GeoEntry::Kind::Poi, 30.24, 120.15, "Hangzhou"});
  CHECK(gaz.contains("West Lake"));
  CHECK(gaz.locate("Hangzhou").lat == doctest::Approx(30.25));
  CHECK(gaz.get("West Lake").name_tokens() == std::vector<std::string>{"West", "Lake"});
  CHECK_THROWS_AS(gaz.get("Shanghai"), std::invalid_argument);
}

TEST_CASE("gazetteer file round-trip and parse errors") {
  std::string path = temp_path("gaz.tsv");
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "Hangzhou\tcity\t30.25\t120.17\t-\n";
    out << "West Lake\tpoi\t30.24\t120.15\tHangzhou\n";
  }
  Gazetteer gaz = load_gazetteer(path);
  CHECK(gaz.entries().size() == 2);
  CHECK(gaz.get("West Lake").parent_city == "Hangzhou");

  std::string out2 = temp_path("gaz2.tsv");
  save_gazetteer(gaz, out2);
  Gazetteer gaz2 = load_gazetteer(out2);
  CHECK(gaz2.entries().size() == 2);
  CHECK(gaz2.locate("West Lake").lon == doctest::Approx(120.15));

  {
    std::ofstream out(path);
    out << "OnlyThreeFields\tcity\t1.0\n";
  }
  CHECK_THROWS_AS(load_gazetteer(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "X\tvillage\t1.0\t2.0\t-\n";
  }
  CHECK_THROWS_AS(load_gazetteer(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "X\tcity\tnotanumber\t2.0\t-\n";
  }
  CHECK_THROWS_AS(load_gazetteer(path), std::runtime_error);
  std::remove(path.c_str());
  std::remove(out2.c_str());
}

TEST_CASE("confidence score and filter_top") {
  QueryClickPair a;
  a.uv_c = 3;
  a.uv_p = 2;
  CHECK(confidence_score(a) == 23);

  std::vector<QueryClickPair> pairs(4);
  pairs[0].query = "a"; pairs[0].uv_c = 5; pairs[0].uv_p = 0;   // score 5
  pairs[1].query = "b"; pairs[1].uv_c = 0; pairs[1].uv_p = 1;   // score 10
  pairs[2].query = "c"; pairs[2].uv_c = 5; pairs[2].uv_p = 0;   // score 5, ties with a
  pairs[3].query = "d"; pairs[3].uv_c = 30; pairs[3].uv_p = 0;  // score 30
  auto top = filter_top(pairs, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].query == "d");
  CHECK(top[1].query == "b");
  CHECK(top[2].query == "a");  // stable: original order breaks the tie
  CHECK(filter_top(pairs, 10).size() == 4);
  CHECK(filter_top({}, 3).empty());
}

TEST_CASE("generated gazetteer is valid and deterministic") {
  SynthConfig cfg;
  cfg.n_cities = 8;
  cfg.n_pois_per_city = 4;
  Gazetteer a = generate_gazetteer(cfg, RngStream(42));
  Gazetteer b = generate_gazetteer(cfg, RngStream(42));
  REQUIRE(a.entries().size() == 8 * 5);
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    CHECK(a.entries()[i].name == b.entries()[i].name);
    CHECK(a.entries()[i].lat == b.entries()[i].lat);
  }
  int n_cities = 0, n_pois = 0;
  for (const auto& e : a.entries()) {
    if (e.kind == GeoEntry::Kind::City) {
      ++n_cities;
      CHECK(e.parent_city.empty());
    } else {
      ++n_pois;
      const auto& c = a.get(e.parent_city);
      CHECK(std::abs(e.lat - c.lat) <= 0.5);
      CHECK(std::abs(e.lon - c.lon) <= 0.5);
      CHECK(e.name_tokens().size() == 2);  // "Word Type"
    }
  }
  CHECK(n_cities == 8);
  CHECK(n_pois == 32);
}

TEST_CASE("synthesized corpus matches configured rates") {
  SynthConfig cfg;
  cfg.n_pairs = 10000;
  cfg.seed = 7;
  Gazetteer gaz = generate_gazetteer(cfg, RngStream(cfg.seed));
  auto pairs = synthesize_corpus(cfg, gaz);
  REQUIRE(pairs.size() == 10000);

  int n_geo = 0, n_misinput = 0;
  std::set<std::string> items;
  for (const auto& p : pairs) {
    CHECK_FALSE(p.query.empty());
    CHECK_FALSE(p.item_title.empty());
    items.insert(p.item_title);
    bool has_geo = false;
    auto toks = split_tokens(p.query);
    for (const auto& span : p.query_phrases) {
      CHECK(span.start >= 0);
      CHECK(span.end >= span.start);
      CHECK(span.end < static_cast<int>(toks.size()));
      if (span.role == "geo") has_geo = true;
    }
    if (has_geo) ++n_geo;
    if (!p.clean_query.empty()) {
      ++n_misinput;
      REQUIRE(p.transposed_positions.size() == 2);
      int i = p.transposed_positions[0];
      CHECK(p.transposed_positions[1] == i + 1);
      auto clean = split_tokens(p.clean_query);
      REQUIRE(clean.size() == toks.size());
      CHECK(clean[i] == toks[i + 1]);
      CHECK(clean[i + 1] == toks[i]);
      for (std::size_t t = 0; t < toks.size(); ++t)
        if (static_cast<int>(t) != i && static_cast<int>(t) != i + 1) CHECK(clean[t] == toks[t]);
    }
    for (const auto& g : p.item_geo_entities) CHECK(gaz.contains(g));
  }
  double geo_rate = static_cast<double>(n_geo) / pairs.size();
  CHECK(geo_rate > 0.62);
  CHECK(geo_rate < 0.68);
  double mis_rate = static_cast<double>(n_misinput) / pairs.size();
  CHECK(mis_rate > 0.04);
  CHECK(mis_rate < 0.12);
  CHECK(items.size() >= 100);  // plenty of distinct click items
}

TEST_CASE("synthesis is deterministic and file round-trip is byte-identical") {
  SynthConfig cfg;
  cfg.n_pairs = 500;
  cfg.seed = 11;
  Gazetteer gaz = generate_gazetteer(cfg, RngStream(cfg.seed));
  auto a = synthesize_corpus(cfg, gaz);
  auto b = synthesize_corpus(cfg, gaz);
  REQUIRE(a.size() == b.size());
  std::string pa = temp_path("corpus_a.jsonl"), pb = temp_path("corpus_b.jsonl");
  save_corpus(a, pa);
  save_corpus(b, pb);
  CHECK(file_bytes(pa) == file_bytes(pb));

  auto loaded = load_corpus(pa);
  REQUIRE(loaded.size() == a.size());
  std::string pc = temp_path("corpus_c.jsonl");
  save_corpus(loaded, pc);
  CHECK(file_bytes(pc) == file_bytes(pa));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
  std::remove(pc.c_str());
}

TEST_CASE("corpus load reports the offending line") {
  std::string path = temp_path("corpus_bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"query":"a","item_title":"t","uv_c":1,"uv_p":0,"query_phrases":[],"item_geo_entities":[]})"
        << '\n';
    out << "not json\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.n_pairs = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.queries_per_item_min = 5;
  cfg.queries_per_item_max = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.geo_query_rate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
