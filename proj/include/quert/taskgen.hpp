#pragma once

// Turns scored query/click pairs into pretraining examples. Each example
// carries three views of one pair: the masked joint sequence (Geo-MP/Geo-CP),
// the shuffled clean query with order labels (PTOP), and the clean
// anchor/positive queries (UCBL).

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "quert/corpus.hpp"
#include "quert/geohash.hpp"
#include "quert/rng.hpp"
#include "quert/tensor.hpp"
#include "quert/text.hpp"

namespace quert {

struct TaskGenConfig {
  int max_joint_len = 64;
  int max_query_len = 16;  // query tokens, excluding [CLS]/[SEP]
  int q_max = 8;           // maximum phrases per query
  int r_max = 8;           // maximum tokens per phrase
  int n_geohash = 6;
  int click_group_k = 5;
  double p_mask_geo_both = 0.5;
  double p_mask_geo_one = 0.3;
  double p_mask_other = 0.15;
  double token_shuffle_p = 0.15;
  bool xor_geo_both = false;  // mask exactly one side of a shared geo phrase

  void validate() const {
    if (max_joint_len < 8 || max_query_len < 1 || max_query_len + 2 > max_joint_len)
      throw std::invalid_argument("taskgen config: sequence length limits invalid");
    if (q_max < 1 || r_max < 1 || n_geohash < 1 || click_group_k < 1)
      throw std::invalid_argument("taskgen config: counts must be positive");
    for (double p : {p_mask_geo_both, p_mask_geo_one, p_mask_other, token_shuffle_p})
      if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("taskgen config: probabilities must be in [0,1]");
  }
};

enum class MaskAction { Mask, Random, Keep };

struct MaskPlan {
  std::vector<int> positions;          // sorted positions in the joint sequence
  std::vector<MaskAction> actions;     // parallel to positions
  std::vector<int> mlm_labels;         // full joint length; kIgnoreIndex when unmasked
};

struct JointSequence {
  std::vector<int> ids;                           // [CLS] q [SEP] c [SEP]
  int query_len = 0;                              // m
  int item_len = 0;                               // n
  std::vector<std::pair<int, int>> q_geo_spans;   // joint-sequence positions, inclusive
  std::vector<std::pair<int, int>> c_geo_spans;
  std::vector<std::string> q_geo_names;
  std::vector<std::string> c_geo_names;
};

inline JointSequence make_joint_sequence(const TokenizedText& q_tok, const TokenizedText& c_tok,
                                         const Gazetteer& gaz) {
  JointSequence js;
  js.query_len = static_cast<int>(q_tok.ids.size());
  js.item_len = static_cast<int>(c_tok.ids.size());
  js.ids.push_back(Vocab::kCls);
  js.ids.insert(js.ids.end(), q_tok.ids.begin(), q_tok.ids.end());
  js.ids.push_back(Vocab::kSep);
  js.ids.insert(js.ids.end(), c_tok.ids.begin(), c_tok.ids.end());
  js.ids.push_back(Vocab::kSep);
  for (auto [s, e] : detect_geo_phrases(q_tok.tokens, gaz)) {
    js.q_geo_spans.emplace_back(s + 1, e + 1);
    js.q_geo_names.push_back(detokenize({q_tok.tokens.begin() + s, q_tok.tokens.begin() + e + 1}));
  }
  int c_off = js.query_len + 2;
  for (auto [s, e] : detect_geo_phrases(c_tok.tokens, gaz)) {
    js.c_geo_spans.emplace_back(s + c_off, e + c_off);
    js.c_geo_names.push_back(detokenize({c_tok.tokens.begin() + s, c_tok.tokens.begin() + e + 1}));
  }
  return js;
}

// Geo phrases present on both sides draw masking at p_mask_geo_both per side,
// one-sided geo phrases at p_mask_geo_one, every other non-special token at
// p_mask_other. Selected tokens get 80% [MASK] / 10% random / 10% keep.
inline MaskPlan plan_geo_masks(const JointSequence& js, const Vocab& vocab,
                               const TaskGenConfig& cfg, RngStream& rng) {
  MaskPlan plan;
  plan.mlm_labels.assign(js.ids.size(), kIgnoreIndex);
  std::vector<bool> is_geo(js.ids.size(), false);
  std::vector<bool> selected(js.ids.size(), false);

  auto mark = [&](const std::vector<std::pair<int, int>>& spans) {
    for (auto [s, e] : spans)
      for (int i = s; i <= e; ++i) is_geo[i] = true;
  };
  mark(js.q_geo_spans);
  mark(js.c_geo_spans);

  auto select_span = [&](std::pair<int, int> span) {
    for (int i = span.first; i <= span.second; ++i) selected[i] = true;
  };

  // Shared names, by exact phrase text.
  std::map<std::string, bool> in_c;
  for (const auto& n : js.c_geo_names) in_c[n] = true;
  std::map<std::string, bool> in_q;
  for (const auto& n : js.q_geo_names) in_q[n] = true;

  auto handle_side = [&](const std::vector<std::pair<int, int>>& spans,
                         const std::vector<std::string>& names,
                         const std::map<std::string, bool>& other_side, bool is_query_side) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
      bool both = other_side.count(names[i]) != 0;
      if (both && cfg.xor_geo_both) {
        // One coin per shared phrase occurrence pair; the query side consumes
        // it, the item side uses the complement.
        continue;  // handled jointly below
      }
      double p = both ? cfg.p_mask_geo_both : cfg.p_mask_geo_one;
      if (rng.uniform() < p) select_span(spans[i]);
    }
    (void)is_query_side;
  };

  if (cfg.xor_geo_both) {
    // Pair up shared phrases by name: exactly one side masked.
    for (std::size_t i = 0; i < js.q_geo_spans.size(); ++i) {
      if (!in_c.count(js.q_geo_names[i])) {
        if (rng.uniform() < cfg.p_mask_geo_one) select_span(js.q_geo_spans[i]);
        continue;
      }
      bool mask_query_side = rng.uniform() < 0.5;
      if (mask_query_side) select_span(js.q_geo_spans[i]);
      for (std::size_t j = 0; j < js.c_geo_spans.size(); ++j)
        if (js.c_geo_names[j] == js.q_geo_names[i] && !mask_query_side)
          select_span(js.c_geo_spans[j]);
    }
    for (std::size_t j = 0; j < js.c_geo_spans.size(); ++j)
      if (!in_q.count(js.c_geo_names[j]) && rng.uniform() < cfg.p_mask_geo_one)
        select_span(js.c_geo_spans[j]);
  } else {
    handle_side(js.q_geo_spans, js.q_geo_names, in_c, true);
    handle_side(js.c_geo_spans, js.c_geo_names, in_q, false);
  }

  for (std::size_t i = 0; i < js.ids.size(); ++i) {
    if (vocab.is_special(js.ids[i]) || is_geo[i]) continue;
    if (rng.uniform() < cfg.p_mask_other) selected[i] = true;
  }

  for (std::size_t i = 0; i < js.ids.size(); ++i) {
    if (!selected[i]) continue;
    plan.positions.push_back(static_cast<int>(i));
    plan.mlm_labels[i] = js.ids[i];
    double r = rng.uniform();
    if (r < 0.8)
      plan.actions.push_back(MaskAction::Mask);
    else if (r < 0.9)
      plan.actions.push_back(MaskAction::Random);
    else
      plan.actions.push_back(MaskAction::Keep);
  }
  return plan;
}

inline std::vector<int> apply_mask_plan(const std::vector<int>& ids, const MaskPlan& plan,
                                        const Vocab& vocab, RngStream& rng) {
  std::vector<int> out = ids;
  for (std::size_t i = 0; i < plan.positions.size(); ++i) {
    int pos = plan.positions[i];
    switch (plan.actions[i]) {
      case MaskAction::Mask:
        out[pos] = Vocab::kMask;
        break;
      case MaskAction::Random:
        out[pos] = Vocab::kNumSpecials +
                   static_cast<int>(rng.uniform_int(vocab.size() - Vocab::kNumSpecials));
        break;
      case MaskAction::Keep:
        break;
    }
  }
  return out;
}

struct OrderLabels {
  std::vector<int> phrase_order;  // y_alpha, 1-based original phrase index
  std::vector<int> token_order;   // y_beta, 1-based original position in phrase
};

struct ShuffledQuery {
  std::vector<int> tokens;
  OrderLabels labels;
};

// Phrases permuted uniformly; each phrase independently token-shuffled with
// probability token_shuffle_p. Returns nullopt when Q/R limits are exceeded.
inline std::optional<ShuffledQuery> shuffle_and_label(const std::vector<std::vector<int>>& phrases,
                                                      const TaskGenConfig& cfg, RngStream& rng) {
  if (phrases.size() > static_cast<std::size_t>(cfg.q_max)) return std::nullopt;
  for (const auto& p : phrases)
    if (p.size() > static_cast<std::size_t>(cfg.r_max) || p.empty()) return std::nullopt;

  std::vector<int> phrase_perm(phrases.size());
  std::iota(phrase_perm.begin(), phrase_perm.end(), 0);
  rng.shuffle(phrase_perm);

  ShuffledQuery out;
  for (int orig_phrase : phrase_perm) {
    const auto& toks = phrases[orig_phrase];
    std::vector<int> token_perm(toks.size());
    std::iota(token_perm.begin(), token_perm.end(), 0);
    if (toks.size() > 1 && rng.uniform() < cfg.token_shuffle_p) rng.shuffle(token_perm);
    for (int orig_tok : token_perm) {
      out.tokens.push_back(toks[orig_tok]);
      out.labels.phrase_order.push_back(orig_phrase + 1);
      out.labels.token_order.push_back(orig_tok + 1);
    }
  }
  return out;
}

struct ClickGroup {
  std::string item_title;
  std::vector<std::size_t> members;  // pair indices, ranked by confidence score
};

inline std::vector<ClickGroup> build_click_groups(const std::vector<QueryClickPair>& pairs,
                                                  int k_cap) {
  std::map<std::string, std::vector<std::size_t>> by_item;
  std::vector<std::string> order;  // first-seen item order for determinism
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [it, inserted] = by_item.try_emplace(pairs[i].item_title);
    if (inserted) order.push_back(pairs[i].item_title);
    it->second.push_back(i);
  }
  std::vector<ClickGroup> groups;
  groups.reserve(order.size());
  for (const auto& title : order) {
    ClickGroup g;
    g.item_title = title;
    g.members = by_item[title];
    std::stable_sort(g.members.begin(), g.members.end(), [&](std::size_t a, std::size_t b) {
      return confidence_score(pairs[a]) > confidence_score(pairs[b]);
    });
    if (g.members.size() > static_cast<std::size_t>(k_cap)) g.members.resize(k_cap);
    groups.push_back(std::move(g));
  }
  return groups;
}

inline std::size_t sample_positive(const ClickGroup& group, RngStream& rng) {
  if (group.members.empty()) throw std::invalid_argument("sample_positive: empty group");
  return group.members[rng.uniform_int(group.members.size())];
}

struct PretrainExample {
  // Geo-MP / Geo-CP view
  std::vector<int> masked_ids;
  std::vector<int> attention_mask;
  std::vector<int> mlm_labels;
  std::string geohash_target;
  // PTOP view: [CLS] shuffled-q [SEP], labels per query token
  std::vector<int> shuffled_ids;
  std::vector<int> shuffled_attention;
  OrderLabels order;
  // UCBL view: [CLS] q [SEP] clean, plus the sampled positive
  std::vector<int> anchor_ids;
  std::vector<int> anchor_attention;
  std::vector<int> positive_ids;
  std::vector<int> positive_attention;
};

namespace detail {

inline void pad_to(std::vector<int>& ids, std::vector<int>& attention, int fixed_len) {
  attention.assign(ids.size(), 1);
  while (static_cast<int>(ids.size()) < fixed_len) {
    ids.push_back(Vocab::kPad);
    attention.push_back(0);
  }
}

inline std::vector<int> wrap_query(const std::vector<int>& toks) {
  std::vector<int> ids;
  ids.push_back(Vocab::kCls);
  ids.insert(ids.end(), toks.begin(), toks.end());
  ids.push_back(Vocab::kSep);
  return ids;
}

}  // namespace detail

// Deterministic batch stream over a prepared corpus. Anchors inside one batch
// always link to distinct click items.
class ExampleStream {
 public:
  ExampleStream(const std::vector<QueryClickPair>& pairs, const Gazetteer& gaz,
                const Vocab& vocab, TaskGenConfig cfg, RngStream rng)
      : pairs_(&pairs), gaz_(&gaz), vocab_(&vocab), cfg_(cfg), rng_(rng) {
    groups_ = build_click_groups(pairs, cfg.click_group_k);
    for (std::size_t gi = 0; gi < groups_.size(); ++gi)
      group_of_item_[groups_[gi].item_title] = gi;
    std::size_t distinct = group_of_item_.size();
    if (distinct == 0) throw std::invalid_argument("ExampleStream: empty corpus");
    order_.resize(pairs.size());
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(order_);
  }

  const std::vector<ClickGroup>& groups() const { return groups_; }
  std::size_t skipped() const { return skipped_; }
  std::uint64_t rng_position() const { return rng_.position(); }
  std::size_t cursor() const { return cursor_; }
  void restore(std::size_t cursor, std::uint64_t rng_position) {
    rng_ = RngStream(rng_.seed());
    rng_.seek(rng_position);
    cursor_ = cursor;
    // order_ depends only on the initial shuffle, which seek replays past.
  }

  std::vector<PretrainExample> next_batch(std::size_t batch_size) {
    if (batch_size < 2)
      throw std::invalid_argument("next_batch: batch size must be >= 2 for contrastive loss");
    if (group_of_item_.size() < batch_size)
      throw std::invalid_argument("next_batch: corpus has fewer distinct items than batch size");
    std::vector<PretrainExample> batch;
    std::set<std::string> items_in_batch;
    std::size_t guard = 0;
    while (batch.size() < batch_size) {
      if (cursor_ >= order_.size()) {
        cursor_ = 0;
        rng_.shuffle(order_);
      }
      if (++guard > order_.size() * 4 + 64)
        throw std::runtime_error("next_batch: cannot assemble a batch of distinct items");
      const QueryClickPair& pair = (*pairs_)[order_[cursor_++]];
      if (items_in_batch.count(pair.item_title)) continue;
      auto ex = make_example(pair);
      if (!ex) {
        ++skipped_;
        continue;
      }
      items_in_batch.insert(pair.item_title);
      batch.push_back(std::move(*ex));
    }
    return batch;
  }

  std::optional<PretrainExample> make_example(const QueryClickPair& pair) {
    TokenizedText q_tok = tokenize(pair.query, *vocab_);
    TokenizedText c_tok = tokenize(pair.item_title, *vocab_);
    if (static_cast<int>(q_tok.ids.size()) > cfg_.max_query_len) return std::nullopt;
    JointSequence js = make_joint_sequence(q_tok, c_tok, *gaz_);
    if (static_cast<int>(js.ids.size()) > cfg_.max_joint_len) return std::nullopt;

    // PTOP phrases from generation metadata; one whole-query phrase if absent.
    std::vector<std::vector<int>> phrases;
    if (!pair.query_phrases.empty()) {
      for (const auto& span : pair.query_phrases) {
        if (span.start < 0 || span.end >= static_cast<int>(q_tok.ids.size()) ||
            span.start > span.end)
          throw std::invalid_argument("make_example: bad phrase span in query '" + pair.query + "'");
        phrases.emplace_back(q_tok.ids.begin() + span.start, q_tok.ids.begin() + span.end + 1);
      }
    } else if (!q_tok.ids.empty()) {
      phrases.push_back(q_tok.ids);
    }
    if (phrases.empty()) return std::nullopt;
    auto shuffled = shuffle_and_label(phrases, cfg_, rng_);
    if (!shuffled) return std::nullopt;

    PretrainExample ex;
    MaskPlan plan = plan_geo_masks(js, *vocab_, cfg_, rng_);
    ex.masked_ids = apply_mask_plan(js.ids, plan, *vocab_, rng_);
    ex.mlm_labels = plan.mlm_labels;
    detail::pad_to(ex.masked_ids, ex.attention_mask, cfg_.max_joint_len);
    ex.mlm_labels.resize(cfg_.max_joint_len, kIgnoreIndex);

    std::vector<LatLon> entity_points;
    for (const auto& name : pair.item_geo_entities) entity_points.push_back(gaz_->locate(name));
    ex.geohash_target = item_geohash_target(entity_points, cfg_.n_geohash);

    ex.shuffled_ids = detail::wrap_query(shuffled->tokens);
    ex.order = shuffled->labels;
    detail::pad_to(ex.shuffled_ids, ex.shuffled_attention, cfg_.max_query_len + 2);

    ex.anchor_ids = detail::wrap_query(q_tok.ids);
    detail::pad_to(ex.anchor_ids, ex.anchor_attention, cfg_.max_query_len + 2);

    auto git = group_of_item_.find(pair.item_title);
    const ClickGroup& group = groups_[git->second];
    const QueryClickPair& pos_pair = (*pairs_)[sample_positive(group, rng_)];
    TokenizedText pos_tok = tokenize(pos_pair.query, *vocab_);
    std::vector<int> pos_ids = pos_tok.ids;
    if (static_cast<int>(pos_ids.size()) > cfg_.max_query_len)
      pos_ids.resize(cfg_.max_query_len);
    ex.positive_ids = detail::wrap_query(pos_ids);
    detail::pad_to(ex.positive_ids, ex.positive_attention, cfg_.max_query_len + 2);
    return ex;
  }

 private:
  const std::vector<QueryClickPair>* pairs_;
  const Gazetteer* gaz_;
  const Vocab* vocab_;
  TaskGenConfig cfg_;
  RngStream rng_;
  std::vector<ClickGroup> groups_;
  std::map<std::string, std::size_t> group_of_item_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t skipped_ = 0;
};

inline std::vector<PretrainExample> build_batch(const std::vector<QueryClickPair>& pairs,
                                                const Gazetteer& gaz, const Vocab& vocab,
                                                const TaskGenConfig& cfg, RngStream rng,
                                                std::size_t batch_size) {
  ExampleStream stream(pairs, gaz, vocab, cfg, rng);
  return stream.next_batch(batch_size);
}

}  // namespace quert
