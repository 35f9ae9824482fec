#pragma once

// Synthetic travel-search-log corpus: a generated gazetteer of cities and
// POIs, templated query/click-item pairs with click and payment counts, and
// the confidence-score filter applied to ingested pair files.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "quert/geohash.hpp"
#include "quert/rng.hpp"

namespace quert {

struct GeoEntry {
  std::string name;  // whitespace-separated tokens
  enum class Kind { City, Poi } kind = Kind::City;
  double lat = 0.0;
  double lon = 0.0;
  std::string parent_city;  // empty for cities

  std::vector<std::string> name_tokens() const {
    std::vector<std::string> toks;
    std::istringstream is(name);
    std::string t;
    while (is >> t) toks.push_back(t);
    return toks;
  }
};

class Gazetteer {
 public:
  void add(GeoEntry e) {
    if (index_.count(e.name))
      throw std::invalid_argument("gazetteer: duplicate name '" + e.name + "'");
    if (e.lat < -90.0 || e.lat > 90.0)
      throw std::out_of_range("gazetteer: latitude out of range for '" + e.name + "'");
    if (e.lon < -180.0 || e.lon > 180.0)
      throw std::out_of_range("gazetteer: longitude out of range for '" + e.name + "'");
    if (e.kind == GeoEntry::Kind::Poi) {
      auto it = index_.find(e.parent_city);
      if (it == index_.end())
        throw std::invalid_argument("gazetteer: POI '" + e.name + "' references unknown city '" +
                                    e.parent_city + "'");
      const GeoEntry& city = entries_[it->second];
      if (std::abs(e.lat - city.lat) > 0.5 || std::abs(e.lon - city.lon) > 0.5)
        throw std::invalid_argument("gazetteer: POI '" + e.name +
                                    "' lies farther than 0.5 degrees from its city");
    }
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  const std::vector<GeoEntry>& entries() const { return entries_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const GeoEntry& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("gazetteer: unknown name '" + name + "'");
    return entries_[it->second];
  }
  LatLon locate(const std::string& name) const {
    const GeoEntry& e = get(name);
    return {e.lat, e.lon};
  }

 private:
  std::vector<GeoEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Gazetteer file: tab-separated "name kind lat lon parent", '#' comments.
inline Gazetteer load_gazetteer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gazetteer file: " + path);
  Gazetteer gaz;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 5)
      throw std::runtime_error("gazetteer line " + std::to_string(lineno) + ": expected 5 fields, got " +
                               std::to_string(fields.size()));
    GeoEntry e;
    e.name = fields[0];
    if (fields[1] == "city")
      e.kind = GeoEntry::Kind::City;
    else if (fields[1] == "poi")
      e.kind = GeoEntry::Kind::Poi;
    else
      throw std::runtime_error("gazetteer line " + std::to_string(lineno) + ": unknown kind '" +
                               fields[1] + "'");
    try {
      e.lat = std::stod(fields[2]);
      e.lon = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw std::runtime_error("gazetteer line " + std::to_string(lineno) + ": bad coordinate");
    }
    e.parent_city = fields[4] == "-" ? "" : fields[4];
    try {
      gaz.add(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error("gazetteer line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return gaz;
}

inline void save_gazetteer(const Gazetteer& gaz, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write gazetteer file: " + path);
  out << "# name\tkind\tlat\tlon\tparent_city\n";
  for (const auto& e : gaz.entries()) {
    out << e.name << '\t' << (e.kind == GeoEntry::Kind::City ? "city" : "poi") << '\t' << e.lat
        << '\t' << e.lon << '\t' << (e.parent_city.empty() ? "-" : e.parent_city) << '\n';
  }
}

// Inclusive token span [start, end] with a role tag.
struct PhraseSpan {
  int start = 0;
  int end = 0;
  std::string role;  // "geo" or "intent"
};

struct QueryClickPair {
  std::string query;
  std::string item_title;
  int uv_c = 0;
  int uv_p = 0;
  std::vector<PhraseSpan> query_phrases;
  std::vector<std::string> item_geo_entities;
  // Misinput ground truth: empty clean_query means the query is clean.
  std::string clean_query;
  std::vector<int> transposed_positions;
};

inline long long confidence_score(const QueryClickPair& p) {
  return static_cast<long long>(p.uv_c) + 10LL * p.uv_p;
}

inline std::vector<QueryClickPair> filter_top(const std::vector<QueryClickPair>& pairs,
                                              std::size_t n) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidence_score(pairs[a]) > confidence_score(pairs[b]);
  });
  std::vector<QueryClickPair> out;
  out.reserve(std::min(n, pairs.size()));
  for (std::size_t i = 0; i < order.size() && i < n; ++i) out.push_back(pairs[order[i]]);
  return out;
}

struct SynthConfig {
  int n_cities = 40;
  int n_pois_per_city = 12;
  int n_intents = 60;
  int n_pairs = 20000;
  int queries_per_item_min = 2;
  int queries_per_item_max = 6;
  double misinput_rate = 0.08;
  double geo_query_rate = 0.65;
  // Item title geo-mention mix: none / one / two-plus.
  double item_geo_none = 0.10;
  double item_geo_one = 0.60;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_pairs < 0 || n_cities <= 0 || n_pois_per_city < 0 || n_intents <= 0)
      throw std::invalid_argument("synth config: counts must be positive");
    if (queries_per_item_min < 1 || queries_per_item_min > queries_per_item_max)
      throw std::invalid_argument("synth config: queries_per_item min/max invalid");
    if (misinput_rate < 0 || misinput_rate > 1 || geo_query_rate < 0 || geo_query_rate > 1)
      throw std::invalid_argument("synth config: rates must be in [0,1]");
  }
};

namespace detail {

inline const std::vector<std::string>& syllables() {
  static const std::vector<std::string> s = {"ka", "ro",  "ves", "lin", "mar", "to",  "su",
                                             "han", "bel", "qua", "zor", "fen", "dol", "mi",
                                             "ras", "ul",  "gre", "pa",  "shi", "von", "tar",
                                             "ne",  "os",  "wi",  "ja",  "cor", "ly",  "bru"};
  return s;
}

inline const std::vector<std::string>& poi_types() {
  static const std::vector<std::string> s = {"Lake",   "Temple", "Tower",  "Museum", "Garden",
                                             "Bridge", "Palace", "Market", "Beach",  "Park"};
  return s;
}

inline const std::vector<std::string>& intent_adjectives() {
  static const std::vector<std::string> s = {"package", "luxury", "cheap",   "family", "private",
                                             "guided",  "budget", "weekend", "romantic"};
  return s;
}

inline const std::vector<std::string>& intent_nouns() {
  static const std::vector<std::string> s = {"tour",   "hotel", "ticket", "cruise",
                                             "trip",   "pass",  "resort", "flight"};
  return s;
}

inline std::string make_word(RngStream& rng) {
  const auto& syl = syllables();
  int n = 2 + static_cast<int>(rng.uniform_int(2));
  std::string w;
  for (int i = 0; i < n; ++i) w += syl[rng.uniform_int(syl.size())];
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

}  // namespace detail

inline Gazetteer generate_gazetteer(const SynthConfig& cfg, RngStream rng) {
  cfg.validate();
  Gazetteer gaz;
  std::set<std::string> used;
  std::vector<std::string> cities;
  // Namespace feasibility check before drawing.
  std::size_t namespace_size = detail::syllables().size() * detail::syllables().size() * 2;
  if (static_cast<std::size_t>(cfg.n_cities) > namespace_size / 2)
    throw std::invalid_argument("generate_gazetteer: more cities than the name space supports");
  for (int i = 0; i < cfg.n_cities; ++i) {
    std::string name;
    int guard = 0;
    do {
      name = detail::make_word(rng);
      if (++guard > 10000)
        throw std::invalid_argument("generate_gazetteer: name space exhausted for cities");
    } while (used.count(name));
    used.insert(name);
    GeoEntry e;
    e.name = name;
    e.kind = GeoEntry::Kind::City;
    e.lat = -60.0 + rng.uniform() * 120.0;
    e.lon = -170.0 + rng.uniform() * 340.0;
    gaz.add(e);
    cities.push_back(name);
  }
  for (const auto& city : cities) {
    const GeoEntry c = gaz.get(city);  // by value: add() below may reallocate entries
    for (int j = 0; j < cfg.n_pois_per_city; ++j) {
      std::string name;
      int guard = 0;
      do {
        name = detail::make_word(rng) + " " + detail::poi_types()[rng.uniform_int(10)];
        if (++guard > 10000)
          throw std::invalid_argument("generate_gazetteer: name space exhausted for POIs");
      } while (used.count(name));
      used.insert(name);
      GeoEntry e;
      e.name = name;
      e.kind = GeoEntry::Kind::Poi;
      e.lat = c.lat + (rng.uniform() - 0.5) * 0.5;
      e.lon = c.lon + (rng.uniform() - 0.5) * 0.5;
      e.lat = std::clamp(e.lat, -90.0, 90.0);
      e.lon = std::clamp(e.lon, -180.0, 180.0);
      e.parent_city = city;
      gaz.add(e);
    }
  }
  return gaz;
}

inline std::string join(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::string out;
  for (const auto& t : a) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  for (const auto& t : b) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

namespace detail {

struct SynthItem {
  std::string title;
  std::vector<std::string> geo_entities;
  int adj_idx;   // topic of the item, queries vary around it
  int noun_idx;
};

inline int geometric_count(RngStream& rng, double p) {
  // Failures before first success; long-tailed click/payment counts.
  int n = 0;
  while (rng.uniform() > p && n < 500) ++n;
  return n;
}

}  // namespace detail

// Deterministic synthetic pair generation. Every item receives between
// queries_per_item_min and max distinct queries so click groups always exist.
inline std::vector<QueryClickPair> synthesize_corpus(const SynthConfig& cfg,
                                                     const Gazetteer& gaz) {
  cfg.validate();
  if (gaz.entries().empty()) throw std::invalid_argument("synthesize_corpus: empty gazetteer");
  RngStream rng(cfg.seed);
  if (cfg.n_pairs == 0) return {};

  std::vector<const GeoEntry*> cities, pois;
  for (const auto& e : gaz.entries())
    (e.kind == GeoEntry::Kind::City ? cities : pois).push_back(&e);
  if (cities.empty()) throw std::invalid_argument("synthesize_corpus: gazetteer has no cities");

  const auto& adjs = detail::intent_adjectives();
  const auto& nouns = detail::intent_nouns();
  const std::vector<std::string> fillers = {"special", "offer", "deal", "best", "with",
                                            "and",     "near",  "of",   "including", "visit"};

  double avg_q = (cfg.queries_per_item_min + cfg.queries_per_item_max) / 2.0;
  std::size_t n_items = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.n_pairs / avg_q));

  std::set<std::string> used_titles;
  std::vector<detail::SynthItem> items;
  items.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    detail::SynthItem item;
    item.adj_idx = static_cast<int>(rng.uniform_int(adjs.size()));
    item.noun_idx = static_cast<int>(rng.uniform_int(nouns.size()));
    double r = rng.uniform();
    if (r < cfg.item_geo_none) {
      // no geography
    } else if (r < cfg.item_geo_none + cfg.item_geo_one) {
      const GeoEntry* e = (rng.uniform() < 0.5 && !pois.empty())
                              ? pois[rng.uniform_int(pois.size())]
                              : cities[rng.uniform_int(cities.size())];
      item.geo_entities.push_back(e->name);
    } else {
      // Two entities: usually a city plus one of its POIs (shared geohash
      // prefix), otherwise two unrelated cities.
      if (rng.uniform() < 0.7 && !pois.empty()) {
        const GeoEntry* p = pois[rng.uniform_int(pois.size())];
        item.geo_entities.push_back(p->parent_city);
        item.geo_entities.push_back(p->name);
      } else if (cities.size() >= 2) {
        std::size_t a = rng.uniform_int(cities.size());
        std::size_t b = rng.uniform_int(cities.size());
        while (b == a) b = rng.uniform_int(cities.size());
        item.geo_entities.push_back(cities[a]->name);
        item.geo_entities.push_back(cities[b]->name);
      }
    }
    std::string title;
    int guard = 0;
    do {
      std::ostringstream t;
      t << adjs[item.adj_idx] << ' ' << nouns[item.noun_idx];
      if (item.geo_entities.size() == 1) {
        t << " of " << item.geo_entities[0];
      } else if (item.geo_entities.size() >= 2) {
        t << " of " << item.geo_entities[0] << " including " << item.geo_entities[1] << " visit";
      }
      t << ' ' << fillers[rng.uniform_int(fillers.size())] << ' '
        << fillers[rng.uniform_int(fillers.size())];
      title = t.str();
      if (++guard > 1000) throw std::runtime_error("synthesize_corpus: cannot make unique title");
    } while (used_titles.count(title));
    used_titles.insert(title);
    item.title = title;
    items.push_back(std::move(item));
  }

  std::vector<QueryClickPair> pairs;
  pairs.reserve(cfg.n_pairs);
  std::size_t item_idx = 0;
  while (pairs.size() < static_cast<std::size_t>(cfg.n_pairs)) {
    const detail::SynthItem& item = items[item_idx % items.size()];
    ++item_idx;
    int k = cfg.queries_per_item_min +
            static_cast<int>(rng.uniform_int(cfg.queries_per_item_max - cfg.queries_per_item_min + 1));
    std::set<std::string> used_queries;
    for (int qi = 0; qi < k && pairs.size() < static_cast<std::size_t>(cfg.n_pairs); ++qi) {
      QueryClickPair pair;
      pair.item_title = item.title;
      pair.item_geo_entities = item.geo_entities;

      int guard = 0;
      std::vector<std::string> intent_tokens, geo_tokens;
      bool geo_first = false;
      do {
        // Intent varies around the item topic: same noun, varying adjective.
        int adj = (rng.uniform() < 0.5) ? item.adj_idx
                                        : static_cast<int>(rng.uniform_int(adjs.size()));
        intent_tokens = {adjs[adj], nouns[item.noun_idx]};
        if (rng.uniform() < 0.25) intent_tokens = {nouns[item.noun_idx]};
        geo_tokens.clear();
        if (rng.uniform() < cfg.geo_query_rate) {
          std::string geo_name;
          if (!item.geo_entities.empty()) {
            geo_name = item.geo_entities[rng.uniform_int(item.geo_entities.size())];
            // Sometimes refer to a POI's parent city instead.
            const GeoEntry& e = gaz.get(geo_name);
            if (e.kind == GeoEntry::Kind::Poi && rng.uniform() < 0.3) geo_name = e.parent_city;
          } else {
            geo_name = cities[rng.uniform_int(cities.size())]->name;
          }
          std::istringstream is(geo_name);
          std::string t;
          while (is >> t) geo_tokens.push_back(t);
        }
        geo_first = !geo_tokens.empty() && rng.uniform() < 0.5;
        std::string q = join(geo_first ? geo_tokens : intent_tokens,
                             geo_first ? intent_tokens : geo_tokens);
        if (!used_queries.count(q)) {
          pair.query = q;
          break;
        }
      } while (++guard < 50);
      if (pair.query.empty()) continue;
      used_queries.insert(pair.query);

      // Phrase spans over the final token order.
      const auto& first = geo_first ? geo_tokens : intent_tokens;
      const auto& second = geo_first ? intent_tokens : geo_tokens;
      int pos = 0;
      if (!first.empty()) {
        pair.query_phrases.push_back({pos, pos + static_cast<int>(first.size()) - 1,
                                      geo_first ? "geo" : "intent"});
        pos += static_cast<int>(first.size());
      }
      if (!second.empty()) {
        pair.query_phrases.push_back({pos, pos + static_cast<int>(second.size()) - 1,
                                      geo_first ? "intent" : "geo"});
      }

      pair.uv_c = detail::geometric_count(rng, 0.2);
      pair.uv_p = detail::geometric_count(rng, 0.75);

      // Misinput: one adjacent transposition inside a multi-token phrase.
      if (rng.uniform() < cfg.misinput_rate) {
        std::vector<int> candidates;
        for (std::size_t s = 0; s < pair.query_phrases.size(); ++s)
          if (pair.query_phrases[s].end > pair.query_phrases[s].start)
            candidates.push_back(static_cast<int>(s));
        if (!candidates.empty()) {
          const PhraseSpan& span = pair.query_phrases[candidates[rng.uniform_int(candidates.size())]];
          int i = span.start + static_cast<int>(rng.uniform_int(span.end - span.start));
          std::vector<std::string> toks;
          std::istringstream is(pair.query);
          std::string t;
          while (is >> t) toks.push_back(t);
          pair.clean_query = pair.query;
          std::swap(toks[i], toks[i + 1]);
          std::string q;
          for (std::size_t ti = 0; ti < toks.size(); ++ti) {
            if (ti) q += ' ';
            q += toks[ti];
          }
          if (used_queries.count(q)) {
            pair.clean_query.clear();
          } else {
            used_queries.erase(pair.query);
            used_queries.insert(q);
            pair.query = q;
            pair.transposed_positions = {i, i + 1};
          }
        }
      }
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

inline nlohmann::json pair_to_json(const QueryClickPair& p) {
  nlohmann::json j;
  j["query"] = p.query;
  j["item_title"] = p.item_title;
  j["uv_c"] = p.uv_c;
  j["uv_p"] = p.uv_p;
  nlohmann::json phrases = nlohmann::json::array();
  for (const auto& s : p.query_phrases) phrases.push_back({s.start, s.end, s.role});
  j["query_phrases"] = phrases;
  j["item_geo_entities"] = p.item_geo_entities;
  if (!p.clean_query.empty()) {
    j["clean_query"] = p.clean_query;
    j["transposed_positions"] = p.transposed_positions;
  }
  return j;
}

inline QueryClickPair pair_from_json(const nlohmann::json& j) {
  QueryClickPair p;
  p.query = j.at("query").get<std::string>();
  p.item_title = j.at("item_title").get<std::string>();
  p.uv_c = j.at("uv_c").get<int>();
  p.uv_p = j.at("uv_p").get<int>();
  for (const auto& s : j.at("query_phrases"))
    p.query_phrases.push_back({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<std::string>()});
  for (const auto& g : j.at("item_geo_entities")) p.item_geo_entities.push_back(g.get<std::string>());
  if (j.contains("clean_query")) {
    p.clean_query = j.at("clean_query").get<std::string>();
    for (const auto& t : j.at("transposed_positions")) p.transposed_positions.push_back(t.get<int>());
  }
  return p;
}

inline void save_corpus(const std::vector<QueryClickPair>& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
}

inline std::vector<QueryClickPair> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<QueryClickPair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& ex) {
      throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return pairs;
}

}  // namespace quert
