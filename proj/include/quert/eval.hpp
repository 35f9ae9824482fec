#pragma once

// Probe and metric suite: zero-shot cosine retrieval, masked-geo prediction,
// order-prediction flags, similarity and cluster probes, and the ablation
// comparison report.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "quert/corpus.hpp"
#include "quert/model.hpp"
#include "quert/taskgen.hpp"
#include "quert/text.hpp"

namespace quert {

struct ProbeReport {
  std::map<std::string, double> metrics;
  std::string checkpoint_id;
  std::uint64_t seed = 0;
  std::string task;

  nlohmann::json to_json() const {
    nlohmann::json j{{"checkpoint_id", checkpoint_id}, {"seed", seed}, {"task", task}};
    for (const auto& [k, v] : metrics) j[k] = v;
    return j;
  }
};

// [CLS] embedding of one whitespace-tokenized text, eval mode.
template <class Real>
std::vector<Real> embed_one(EncoderModel<Real>& m, const Vocab& vocab, const std::string& text) {
  TokenizedText tok = tokenize(text, vocab);
  std::vector<int> ids;
  ids.push_back(Vocab::kCls);
  ids.insert(ids.end(), tok.ids.begin(), tok.ids.end());
  ids.push_back(Vocab::kSep);
  if (static_cast<int>(ids.size()) > m.cfg.max_len)
    throw std::invalid_argument("embed: text longer than max_len: '" + text + "'");
  Tape<Real> tape;
  auto enc = encode(tape, m, ids, ids.size(), false, nullptr);
  const auto& reps = tape.value(enc.reps);
  std::vector<Real> out(reps.cols());
  for (std::size_t c = 0; c < reps.cols(); ++c) out[c] = reps.at(0, c);
  return out;
}

template <class Real>
std::vector<std::vector<Real>> embed(EncoderModel<Real>& m, const Vocab& vocab,
                                     const std::vector<std::string>& texts) {
  std::vector<std::vector<Real>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(m, vocab, t));
  return out;
}

template <class Real>
double cosine(const std::vector<Real>& a, const std::vector<Real>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  double denom = std::sqrt(na) * std::sqrt(nb);
  if (denom == 0) throw std::invalid_argument("cosine: zero-norm vector");
  return dot / denom;
}

struct RetrievalTask {
  std::vector<std::string> queries;
  std::vector<std::string> pool;
  std::vector<std::set<std::size_t>> gold;  // pool indices per query
  int k = 20;

  void validate() const {
    if (pool.empty()) throw std::invalid_argument("retrieval task: empty pool");
    if (gold.size() != queries.size())
      throw std::invalid_argument("retrieval task: gold size mismatch");
    for (const auto& g : gold)
      for (std::size_t idx : g)
        if (idx >= pool.size())
          throw std::invalid_argument("retrieval task: gold index outside pool");
  }
};

inline std::pair<double, double> rank_metrics(const std::vector<int>& ranks) {
  if (ranks.empty()) return {0.0, 0.0};
  double mr = 0, mrr = 0;
  for (int r : ranks) {
    if (r < 1) throw std::invalid_argument("rank_metrics: rank below 1");
    mr += r;
    mrr += 1.0 / r;
  }
  return {mr / ranks.size(), mrr / ranks.size()};
}

struct RetrievalResult {
  std::vector<std::vector<std::size_t>> rankings;  // pool indices, best first
  ProbeReport report;
};

// Full cosine ranking of the pool per probe query; ties keep pool order.
template <class Real>
RetrievalResult retrieve(const RetrievalTask& task, EncoderModel<Real>& m, const Vocab& vocab) {
  task.validate();
  auto pool_emb = embed(m, vocab, task.pool);
  auto query_emb = embed(m, vocab, task.queries);
  RetrievalResult res;
  std::vector<int> best_ranks;
  double h1 = 0, h3 = 0, h5 = 0, hk = 0;
  for (std::size_t qi = 0; qi < task.queries.size(); ++qi) {
    std::vector<double> sims(task.pool.size());
    for (std::size_t pi = 0; pi < task.pool.size(); ++pi)
      sims[pi] = cosine(query_emb[qi], pool_emb[pi]);
    std::vector<std::size_t> order(task.pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    int best = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (task.gold[qi].count(order[r])) {
        best = static_cast<int>(r) + 1;
        break;
      }
    }
    if (best == 0) best = static_cast<int>(order.size());  // gold always in pool per validate()
    best_ranks.push_back(best);
    if (best <= 1) h1 += 1;
    if (best <= 3) h3 += 1;
    if (best <= 5) h5 += 1;
    if (best <= task.k) hk += 1;
    res.rankings.push_back(std::move(order));
  }
  double n = static_cast<double>(task.queries.size());
  auto [mr, mrr] = rank_metrics(best_ranks);
  res.report.task = "retrieve";
  res.report.metrics = {{"acc", h1 / n},
                        {"hits@1", h1 / n},
                        {"hits@3", h3 / n},
                        {"hits@5", h5 / n},
                        {"hits@" + std::to_string(task.k), hk / n},
                        {"hits@k", hk / n},
                        {"mr", mr},
                        {"mrr", mrr}};
  return res;
}

struct GeoMaskProbe {
  std::vector<int> masked_ids;       // [CLS] q [SEP] with [MASK] at geo positions
  std::vector<int> gold_positions;   // positions in masked_ids
  std::vector<int> gold_tokens;      // vocabulary ids, parallel to positions
};

// Rank the gold token in the tied MLM distribution at each masked position;
// multi-token phrases contribute the mean of their per-token ranks.
template <class Real>
ProbeReport geo_mask_probe(EncoderModel<Real>& m, const Vocab& vocab,
                           const std::vector<GeoMaskProbe>& probes) {
  std::size_t skipped = 0;
  std::vector<int> ranks;
  double h1 = 0, h3 = 0, h5 = 0;
  std::size_t scored = 0;
  for (const auto& probe : probes) {
    if (probe.gold_positions.empty()) {
      ++skipped;
      continue;
    }
    Tape<Real> tape;
    auto enc = encode(tape, m, probe.masked_ids, probe.masked_ids.size(), false, nullptr);
    auto rows = tape.gather_rows(enc.reps, probe.gold_positions);
    auto logits = tape.add(tape.matmul_nt(rows, enc.tok_emb), tape.param(m.mlm_bias));
    const auto& L = tape.value(logits);
    double rank_sum = 0;
    for (std::size_t i = 0; i < probe.gold_positions.size(); ++i) {
      double gold_logit = L.at(i, probe.gold_tokens[i]);
      int rank = 1;
      for (std::size_t c = 0; c < L.cols(); ++c)
        if (L.at(i, c) > gold_logit) ++rank;
      rank_sum += rank;
    }
    double mean_rank = rank_sum / probe.gold_positions.size();
    ranks.push_back(static_cast<int>(std::lround(std::max(1.0, mean_rank))));
    if (mean_rank <= 1.0) h1 += 1;
    if (mean_rank <= 3.0) h3 += 1;
    if (mean_rank <= 5.0) h5 += 1;
    ++scored;
  }
  ProbeReport rep;
  rep.task = "geo_mask_probe";
  if (scored == 0) {
    rep.metrics = {{"skipped", static_cast<double>(skipped)}};
    return rep;
  }
  auto [mr, mrr] = rank_metrics(ranks);
  double n = static_cast<double>(scored);
  rep.metrics = {{"hits@1", h1 / n}, {"hits@3", h3 / n}, {"hits@5", h5 / n},
                 {"mr", mr},         {"mrr", mrr},       {"skipped", static_cast<double>(skipped)}};
  return rep;
}

struct OrderProbe {
  std::string query;                  // observed (possibly transposed) form
  std::vector<PhraseSpan> phrases;    // spans over the observed form
  std::vector<bool> gold_transposed;  // per token
};

// A token is flagged when the PTOP heads' argmax pair disagrees with the
// identity labels of its observed position. Zero-support precision is
// reported as 1.0 with support marked in the metrics.
template <class Real>
ProbeReport order_probe(EncoderModel<Real>& m, const Vocab& vocab,
                        const std::vector<OrderProbe>& probes) {
  long long tp = 0, fp = 0, fn = 0, support = 0;
  for (const auto& probe : probes) {
    TokenizedText tok = tokenize(probe.query, vocab);
    std::vector<int> ids;
    ids.push_back(Vocab::kCls);
    ids.insert(ids.end(), tok.ids.begin(), tok.ids.end());
    ids.push_back(Vocab::kSep);
    Tape<Real> tape;
    auto enc = encode(tape, m, ids, ids.size(), false, nullptr);
    std::vector<int> rows(tok.ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i + 1);
    auto reps = tape.gather_rows(enc.reps, rows);
    auto hidden = tape.gelu(tape.add(tape.matmul(reps, tape.param(m.ph_w1)), tape.param(m.ph_b1)));
    auto pl = tape.add(tape.matmul(hidden, tape.param(m.ph_w2)), tape.param(m.ph_b2));
    auto tin = m.cfg.ptop_token_head_reads_hidden ? hidden : pl;
    auto th = tape.gelu(tape.add(tape.matmul(tin, tape.param(m.tk_w1)), tape.param(m.tk_b1)));
    auto tl = tape.add(tape.matmul(th, tape.param(m.tk_w2)), tape.param(m.tk_b2));
    const auto& PL = tape.value(pl);
    const auto& TL = tape.value(tl);

    // Identity labels of the observed sequence.
    std::vector<int> id_phrase(tok.ids.size(), 1), id_tok(tok.ids.size(), 1);
    for (std::size_t pi = 0; pi < probe.phrases.size(); ++pi) {
      const auto& span = probe.phrases[pi];
      for (int i = span.start; i <= span.end && i < static_cast<int>(tok.ids.size()); ++i) {
        id_phrase[i] = static_cast<int>(pi) + 1;
        id_tok[i] = i - span.start + 1;
      }
    }
    for (std::size_t i = 0; i < tok.ids.size(); ++i) {
      int pa = 0, ta = 0;
      for (std::size_t c = 1; c < PL.cols(); ++c)
        if (PL.at(i, c) > PL.at(i, pa)) pa = static_cast<int>(c);
      for (std::size_t c = 1; c < TL.cols(); ++c)
        if (TL.at(i, c) > TL.at(i, ta)) ta = static_cast<int>(c);
      bool flagged = (pa + 1 != id_phrase[i]) || (ta + 1 != id_tok[i]);
      bool gold = i < probe.gold_transposed.size() && probe.gold_transposed[i];
      if (gold) ++support;
      if (flagged && gold) ++tp;
      if (flagged && !gold) ++fp;
      if (!flagged && gold) ++fn;
    }
  }
  double precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
  double recall = support == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);
  double f1 = (precision + recall) == 0 ? 0.0 : 2 * precision * recall / (precision + recall);
  ProbeReport rep;
  rep.task = "order_probe";
  rep.metrics = {{"precision", precision},
                 {"recall", recall},
                 {"f1", f1},
                 {"support", static_cast<double>(support)},
                 {"flag_count", static_cast<double>(tp + fp)}};
  return rep;
}

// Mean pairwise cosine per named pair set; pos_uplift = click_related - random.
template <class Real>
ProbeReport similarity_probe(
    EncoderModel<Real>& m, const Vocab& vocab,
    const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& pair_sets) {
  ProbeReport rep;
  rep.task = "similarity_probe";
  for (const auto& [name, pairs] : pair_sets) {
    double sum = 0;
    for (const auto& [a, b] : pairs)
      sum += cosine(embed_one(m, vocab, a), embed_one(m, vocab, b));
    rep.metrics["mean_cosine_" + name] = pairs.empty() ? 0.0 : sum / pairs.size();
  }
  if (rep.metrics.count("mean_cosine_click_related") && rep.metrics.count("mean_cosine_random"))
    rep.metrics["pos_uplift"] =
        rep.metrics["mean_cosine_click_related"] - rep.metrics["mean_cosine_random"];
  return rep;
}

inline constexpr double kClusterRatioCap = 1e6;

struct ClusterProbeResult {
  double cluster_ratio = 0.0;
  std::vector<std::string> poi_names;
  std::vector<std::vector<float>> embeddings;
};

// Intra-city over inter-city mean pairwise cosine of POI-name embeddings.
// Embeddings are centered on their mean first: transformer sentence
// embeddings are strongly anisotropic (all raw cosines close to 1), which
// would compress the ratio toward 1 regardless of cluster structure. The
// centered cosines are shifted to [0, 2] so the ratio stays positive.
template <class Real>
ClusterProbeResult cluster_probe(EncoderModel<Real>& m, const Vocab& vocab,
                                 const std::map<std::string, std::vector<std::string>>& by_city) {
  if (by_city.size() < 2)
    throw std::invalid_argument("cluster_probe: need at least two cities");
  ClusterProbeResult res;
  std::vector<int> city_of;
  std::vector<std::vector<Real>> embs;
  int ci = 0;
  for (const auto& [city, pois] : by_city) {
    if (pois.size() < 2)
      throw std::invalid_argument("cluster_probe: city '" + city + "' has fewer than 2 POIs");
    for (const auto& p : pois) {
      res.poi_names.push_back(p);
      auto e = embed_one(m, vocab, p);
      res.embeddings.emplace_back(e.begin(), e.end());
      embs.push_back(std::move(e));
      city_of.push_back(ci);
    }
    ++ci;
  }
  std::vector<Real> mean(embs[0].size(), Real(0));
  for (const auto& e : embs)
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += e[d];
  for (auto& v : mean) v /= static_cast<Real>(embs.size());
  for (auto& e : embs)
    for (std::size_t d = 0; d < mean.size(); ++d) e[d] -= mean[d];
  double intra = 0, inter = 0;
  long long n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < embs.size(); ++i)
    for (std::size_t j = i + 1; j < embs.size(); ++j) {
      double c = 1.0 + cosine(embs[i], embs[j]);  // shifted to [0, 2]
      if (city_of[i] == city_of[j]) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  intra /= n_intra;
  inter /= n_inter;
  res.cluster_ratio = inter <= 1e-9 ? kClusterRatioCap : std::min(kClusterRatioCap, intra / inter);
  return res;
}

// One row per checkpoint, one column per metric, as JSON lines plus an
// aligned text table.
struct AblationReportRow {
  std::string model_id;
  std::string disabled_task;  // "none" for the full model
  std::map<std::string, double> metrics;
};

inline std::string format_ablation_table(const std::vector<AblationReportRow>& rows) {
  std::set<std::string> cols;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.metrics) cols.insert(k);
  std::ostringstream os;
  os << std::left << std::setw(24) << "model" << std::setw(12) << "disabled";
  for (const auto& c : cols) os << std::right << std::setw(std::max<int>(12, c.size() + 2)) << c;
  os << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(24) << r.model_id << std::setw(12) << r.disabled_task;
    for (const auto& c : cols) {
      os << std::right << std::setw(std::max<int>(12, c.size() + 2));
      auto it = r.metrics.find(c);
      if (it == r.metrics.end())
        os << "-";
      else
        os << std::fixed << std::setprecision(4) << it->second;
    }
    os << '\n';
  }
  return os.str();
}

inline void save_ablation_report(const std::vector<AblationReportRow>& rows,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ablation report: " + path);
  for (const auto& r : rows) {
    nlohmann::json j{{"model_id", r.model_id}, {"disabled_task", r.disabled_task}};
    for (const auto& [k, v] : r.metrics) j[k] = v;
    out << j.dump() << '\n';
  }
}

inline void save_probe_report(const ProbeReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write probe report: " + path);
  out << rep.to_json().dump() << '\n';
}

// ---------------------------------------------------------------------------
// Probe-set construction from a synthetic corpus (deterministic given seed).

// Click-related retrieval: probe = one query of an item, gold = the item's
// sibling queries; pool = all distinct queries of sampled items.
inline RetrievalTask make_click_retrieval_task(const std::vector<QueryClickPair>& pairs,
                                               std::size_t max_probes, int k, RngStream rng,
                                               std::size_t pool_factor = 8) {
  auto groups = build_click_groups(pairs, 1 << 20);
  std::vector<const ClickGroup*> multi;
  for (const auto& g : groups)
    if (g.members.size() >= 2) multi.push_back(&g);
  if (multi.empty()) throw std::invalid_argument("make_click_retrieval_task: no multi-query items");
  RetrievalTask task;
  task.k = k;
  std::map<std::string, std::size_t> pool_index;
  auto pool_id = [&](const std::string& q) {
    auto it = pool_index.find(q);
    if (it != pool_index.end()) return it->second;
    std::size_t id = task.pool.size();
    pool_index[q] = id;
    task.pool.push_back(q);
    return id;
  };
  std::vector<std::size_t> order(multi.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const ClickGroup& g = *multi[order[oi]];
    bool probing = task.queries.size() < max_probes;
    std::vector<std::size_t> member_pool_ids;
    for (std::size_t mi = 0; mi < g.members.size(); ++mi)
      member_pool_ids.push_back(pool_id(pairs[g.members[mi]].query));
    if (probing) {
      task.queries.push_back(pairs[g.members[0]].query);
      std::set<std::size_t> gold(member_pool_ids.begin() + 1, member_pool_ids.end());
      gold.erase(member_pool_ids[0]);  // identical sibling text is not a gold
      if (gold.empty()) {
        task.queries.pop_back();
      } else {
        task.gold.push_back(std::move(gold));
      }
    }
    if (task.queries.size() >= max_probes && task.pool.size() >= max_probes * pool_factor) break;
  }
  // Shuffle the pool. Construction order puts probe groups first, and the
  // ranking breaks cosine ties by pool order, so leaving the pool ordered
  // would hand near-untrained models their gold items for free.
  std::vector<std::size_t> perm(task.pool.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<std::string> shuffled(task.pool.size());
  for (std::size_t i = 0; i < task.pool.size(); ++i) shuffled[perm[i]] = std::move(task.pool[i]);
  task.pool = std::move(shuffled);
  for (auto& gold : task.gold) {
    std::set<std::size_t> remapped;
    for (std::size_t idx : gold) remapped.insert(perm[idx]);
    gold = std::move(remapped);
  }
  return task;
}

// Masked-geo probes over the joint [CLS] query [SEP] item [SEP] sequence.
// The masked span is a query-side geo phrase whose name also appears in the
// item title, so the answer is recoverable from the unmasked item side -
// exactly the situation the geography-aware masking trains at its highest
// rate. A query-only probe would be under-determined: generic intent tokens
// carry no information about which of many cities was masked.
inline std::vector<GeoMaskProbe> make_geo_mask_probes(const std::vector<QueryClickPair>& pairs,
                                                      const Gazetteer& gaz, const Vocab& vocab,
                                                      std::size_t max_probes, RngStream rng) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<GeoMaskProbe> probes;
  std::set<std::string> seen;
  for (std::size_t idx : order) {
    if (probes.size() >= max_probes) break;
    const auto& pair = pairs[idx];
    if (!pair.clean_query.empty()) continue;  // keep misinput queries out
    if (seen.count(pair.query)) continue;
    TokenizedText q_tok = tokenize(pair.query, vocab);
    TokenizedText c_tok = tokenize(pair.item_title, vocab);
    JointSequence js = make_joint_sequence(q_tok, c_tok, gaz);
    if (js.ids.size() > 64) continue;  // keep within the default model length
    int span = -1;
    for (std::size_t s = 0; s < js.q_geo_spans.size() && span < 0; ++s)
      for (const auto& c_name : js.c_geo_names)
        if (js.q_geo_names[s] == c_name) {
          span = static_cast<int>(s);
          break;
        }
    if (span < 0) continue;
    seen.insert(pair.query);
    GeoMaskProbe p;
    p.masked_ids = js.ids;
    auto [s, e] = js.q_geo_spans[span];
    for (int i = s; i <= e; ++i) {
      p.gold_positions.push_back(i);
      p.gold_tokens.push_back(js.ids[i]);
      p.masked_ids[i] = Vocab::kMask;
    }
    probes.push_back(std::move(p));
  }
  return probes;
}

// Order probes: misinput queries (gold: the transposed pair) mixed with an
// equal number of clean queries (gold: nothing).
inline std::vector<OrderProbe> make_order_probes(const std::vector<QueryClickPair>& pairs,
                                                 std::size_t max_each, RngStream rng) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<OrderProbe> probes;
  std::size_t n_bad = 0, n_clean = 0;
  for (std::size_t idx : order) {
    const auto& pair = pairs[idx];
    std::size_t n_tokens = split_tokens(pair.query).size();
    if (!pair.clean_query.empty() && n_bad < max_each) {
      OrderProbe p;
      p.query = pair.query;
      p.phrases = pair.query_phrases;
      p.gold_transposed.assign(n_tokens, false);
      for (int t : pair.transposed_positions)
        if (t >= 0 && t < static_cast<int>(n_tokens)) p.gold_transposed[t] = true;
      probes.push_back(std::move(p));
      ++n_bad;
    } else if (pair.clean_query.empty() && n_clean < max_each) {
      OrderProbe p;
      p.query = pair.query;
      p.phrases = pair.query_phrases;
      p.gold_transposed.assign(n_tokens, false);
      probes.push_back(std::move(p));
      ++n_clean;
    }
    if (n_bad >= max_each && n_clean >= max_each) break;
  }
  return probes;
}

// Labeled pair sets for the similarity probe.
inline std::map<std::string, std::vector<std::pair<std::string, std::string>>>
make_similarity_sets(const std::vector<QueryClickPair>& pairs, const Gazetteer& gaz,
                     std::size_t max_pairs, RngStream rng) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sets;
  auto groups = build_click_groups(pairs, 1 << 20);
  std::vector<const ClickGroup*> multi;
  for (const auto& g : groups)
    if (g.members.size() >= 2) multi.push_back(&g);
  rng.shuffle(multi);
  for (const auto* g : multi) {
    if (sets["click_related"].size() >= max_pairs) break;
    const std::string& a = pairs[g->members[0]].query;
    const std::string& b = pairs[g->members[1]].query;
    if (a != b) sets["click_related"].emplace_back(a, b);
  }
  // Random pairs across distinct items.
  for (std::size_t i = 0; i + 1 < multi.size() && sets["random"].size() < max_pairs; i += 2)
    sets["random"].emplace_back(pairs[multi[i]->members[0]].query,
                                pairs[multi[i + 1]->members[0]].query);
  // Phrase-permutation pairs: swap the two phrases of a two-phrase query.
  for (const auto& pair : pairs) {
    if (sets["phrase_permutation"].size() >= max_pairs) break;
    if (pair.query_phrases.size() != 2 || !pair.clean_query.empty()) continue;
    auto toks = split_tokens(pair.query);
    const auto& s0 = pair.query_phrases[0];
    const auto& s1 = pair.query_phrases[1];
    std::vector<std::string> swapped(toks.begin() + s1.start, toks.begin() + s1.end + 1);
    swapped.insert(swapped.end(), toks.begin() + s0.start, toks.begin() + s0.end + 1);
    sets["phrase_permutation"].emplace_back(pair.query, detokenize(swapped));
  }
  // Token-permutation pairs from misinput ground truth.
  for (const auto& pair : pairs) {
    if (sets["token_permutation"].size() >= max_pairs) break;
    if (!pair.clean_query.empty())
      sets["token_permutation"].emplace_back(pair.clean_query, pair.query);
  }
  // Different-geo pairs: same intent, different city.
  std::vector<const GeoEntry*> cities;
  for (const auto& e : gaz.entries())
    if (e.kind == GeoEntry::Kind::City) cities.push_back(&e);
  if (cities.size() >= 2) {
    for (const auto& pair : pairs) {
      if (sets["different_geo"].size() >= max_pairs) break;
      for (const auto& span : pair.query_phrases) {
        if (span.role != "geo") continue;
        auto toks = split_tokens(pair.query);
        const GeoEntry* other = cities[rng.uniform_int(cities.size())];
        std::vector<std::string> replaced;
        for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
          if (i == span.start) {
            auto nt = other->name_tokens();
            replaced.insert(replaced.end(), nt.begin(), nt.end());
          }
          if (i < span.start || i > span.end) replaced.push_back(toks[i]);
        }
        std::string alt = detokenize(replaced);
        if (alt != pair.query) sets["different_geo"].emplace_back(pair.query, alt);
        break;
      }
    }
  }
  return sets;
}

// POI names grouped by city for the cluster probe.
inline std::map<std::string, std::vector<std::string>> make_cluster_set(const Gazetteer& gaz,
                                                                        std::size_t n_cities,
                                                                        std::size_t pois_per_city) {
  std::map<std::string, std::vector<std::string>> by_city;
  for (const auto& e : gaz.entries())
    if (e.kind == GeoEntry::Kind::Poi) by_city[e.parent_city].push_back(e.name);
  std::map<std::string, std::vector<std::string>> out;
  for (auto& [city, pois] : by_city) {
    if (out.size() >= n_cities) break;
    if (pois.size() < pois_per_city) continue;
    pois.resize(pois_per_city);
    out[city] = pois;
  }
  return out;
}

}  // namespace quert
