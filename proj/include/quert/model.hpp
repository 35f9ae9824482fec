#pragma once

// Tiny transformer encoder with the four task heads and losses: masked token
// prediction over the joint sequence, per-position geohash classification from
// [CLS], in-batch contrastive learning on click-related queries, and phrase /
// token order prediction on shuffled queries.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "quert/geohash.hpp"
#include "quert/rng.hpp"
#include "quert/taskgen.hpp"
#include "quert/tensor.hpp"

namespace quert {

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_len = 64;
  double dropout = 0.1;
  int n_geohash = 6;
  int geohash_classes = kGeohashClasses;
  int q_max = 8;
  int r_max = 8;
  double tau = 0.1;
  // Contrastive denominator as printed in the source formulation (diagonal
  // similarities only) instead of in-batch negatives.
  bool ucbl_literal_denominator = false;
  // Token-order head reads the phrase head's hidden layer instead of its logits.
  bool ptop_token_head_reads_hidden = false;

  void validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
        max_len <= 0 || n_geohash <= 0 || q_max <= 0 || r_max <= 0)
      throw std::invalid_argument("encoder config: dimensions must be positive");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("encoder config: d_model not divisible by n_heads");
  }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size},
            {"d_model", d_model},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"d_ff", d_ff},
            {"max_len", max_len},
            {"dropout", dropout},
            {"n_geohash", n_geohash},
            {"geohash_classes", geohash_classes},
            {"q_max", q_max},
            {"r_max", r_max},
            {"tau", tau},
            {"ucbl_literal_denominator", ucbl_literal_denominator},
            {"ptop_token_head_reads_hidden", ptop_token_head_reads_hidden}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size");
    c.d_model = j.at("d_model");
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.d_ff = j.at("d_ff");
    c.max_len = j.at("max_len");
    c.dropout = j.at("dropout");
    c.n_geohash = j.at("n_geohash");
    c.geohash_classes = j.at("geohash_classes");
    c.q_max = j.at("q_max");
    c.r_max = j.at("r_max");
    c.tau = j.at("tau");
    c.ucbl_literal_denominator = j.at("ucbl_literal_denominator");
    c.ptop_token_head_reads_hidden = j.at("ptop_token_head_reads_hidden");
    return c;
  }
};

// Which task owns a parameter; shared parameters belong to Task::Shared.
// UCBL has no parameters of its own (it reads [CLS] directly).
enum class Task { Shared, GeoMP, GeoCP, Ucbl, Ptop };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::Shared: return "shared";
    case Task::GeoMP: return "geo_mp";
    case Task::GeoCP: return "geo_cp";
    case Task::Ucbl: return "ucbl";
    case Task::Ptop: return "ptop";
  }
  return "?";
}

template <class Real>
struct EncoderModel {
  EncoderConfig cfg;

  Parameter<Real> tok_emb, pos_emb, emb_ln_g, emb_ln_b;
  struct Layer {
    Parameter<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter<Real> ln1_g, ln1_b;
    Parameter<Real> w1, b1, w2, b2;
    Parameter<Real> ln2_g, ln2_b;
  };
  std::vector<Layer> layers;
  Parameter<Real> mlm_bias;                       // vocab-sized; logits tied to tok_emb
  struct GeohashHead {
    Parameter<Real> w1, b1, w2, b2;               // d -> d -> L
  };
  std::vector<GeohashHead> geohash_heads;
  Parameter<Real> ph_w1, ph_b1, ph_w2, ph_b2;     // d -> d -> Q
  Parameter<Real> tk_w1, tk_b1, tk_w2, tk_b2;     // Q (or d) -> d -> R

  std::vector<Parameter<Real>*> params;           // flat manifest, fixed order
  std::vector<Task> owner;                        // parallel to params

  explicit EncoderModel(EncoderConfig config, RngStream init_rng = RngStream(0))
      : cfg(config) {
    cfg.validate();
    std::size_t V = cfg.vocab_size, d = cfg.d_model, ff = cfg.d_ff;
    auto normal = [&](std::vector<std::size_t> shape) {
      Array<Real> a(shape);
      for (auto& x : a.v) x = static_cast<Real>(init_rng.normal() * 0.02);
      return a;
    };
    auto zeros = [](std::vector<std::size_t> shape) { return Array<Real>(shape); };
    auto ones = [](std::vector<std::size_t> shape) {
      Array<Real> a(shape);
      a.fill(Real(1));
      return a;
    };
    auto reg = [&](Parameter<Real>& p, std::string name, Array<Real> init, Task t) {
      p = Parameter<Real>(std::move(name), std::move(init));
      params.push_back(&p);
      owner.push_back(t);
    };

    reg(tok_emb, "tok_emb", normal({V, d}), Task::Shared);
    reg(pos_emb, "pos_emb", normal({static_cast<std::size_t>(cfg.max_len), d}), Task::Shared);
    reg(emb_ln_g, "emb_ln_g", ones({d}), Task::Shared);
    reg(emb_ln_b, "emb_ln_b", zeros({d}), Task::Shared);
    layers.resize(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; ++l) {
      auto& L = layers[l];
      std::string p = "layer" + std::to_string(l) + ".";
      reg(L.wq, p + "wq", normal({d, d}), Task::Shared);
      reg(L.bq, p + "bq", zeros({d}), Task::Shared);
      reg(L.wk, p + "wk", normal({d, d}), Task::Shared);
      reg(L.bk, p + "bk", zeros({d}), Task::Shared);
      reg(L.wv, p + "wv", normal({d, d}), Task::Shared);
      reg(L.bv, p + "bv", zeros({d}), Task::Shared);
      reg(L.wo, p + "wo", normal({d, d}), Task::Shared);
      reg(L.bo, p + "bo", zeros({d}), Task::Shared);
      reg(L.ln1_g, p + "ln1_g", ones({d}), Task::Shared);
      reg(L.ln1_b, p + "ln1_b", zeros({d}), Task::Shared);
      reg(L.w1, p + "w1", normal({d, ff}), Task::Shared);
      reg(L.b1, p + "b1", zeros({ff}), Task::Shared);
      reg(L.w2, p + "w2", normal({ff, d}), Task::Shared);
      reg(L.b2, p + "b2", zeros({d}), Task::Shared);
      reg(L.ln2_g, p + "ln2_g", ones({d}), Task::Shared);
      reg(L.ln2_b, p + "ln2_b", zeros({d}), Task::Shared);
    }
    reg(mlm_bias, "mlm_bias", zeros({V}), Task::GeoMP);
    geohash_heads.resize(cfg.n_geohash);
    for (int i = 0; i < cfg.n_geohash; ++i) {
      std::string p = "geohash" + std::to_string(i) + ".";
      auto& H = geohash_heads[i];
      reg(H.w1, p + "w1", normal({d, d}), Task::GeoCP);
      reg(H.b1, p + "b1", zeros({d}), Task::GeoCP);
      reg(H.w2, p + "w2", normal({d, static_cast<std::size_t>(cfg.geohash_classes)}), Task::GeoCP);
      reg(H.b2, p + "b2", zeros({static_cast<std::size_t>(cfg.geohash_classes)}), Task::GeoCP);
    }
    std::size_t Q = cfg.q_max, Rr = cfg.r_max;
    reg(ph_w1, "ptop.ph_w1", normal({d, d}), Task::Ptop);
    reg(ph_b1, "ptop.ph_b1", zeros({d}), Task::Ptop);
    reg(ph_w2, "ptop.ph_w2", normal({d, Q}), Task::Ptop);
    reg(ph_b2, "ptop.ph_b2", zeros({Q}), Task::Ptop);
    std::size_t tk_in = cfg.ptop_token_head_reads_hidden ? d : Q;
    reg(tk_w1, "ptop.tk_w1", normal({tk_in, d}), Task::Ptop);
    reg(tk_b1, "ptop.tk_b1", zeros({d}), Task::Ptop);
    reg(tk_w2, "ptop.tk_w2", normal({d, Rr}), Task::Ptop);
    reg(tk_b2, "ptop.tk_b2", zeros({Rr}), Task::Ptop);
  }

  EncoderModel(const EncoderModel&) = delete;
  EncoderModel& operator=(const EncoderModel&) = delete;

  void zero_grads() {
    for (auto* p : params) p->zero_grad();
  }

  std::size_t n_scalars() const {
    std::size_t n = 0;
    for (auto* p : params) n += p->value.v.size();
    return n;
  }
};

// Per-sequence encoder forward. Returns per-token representations for the
// first valid_len positions; trailing [PAD] positions are dropped, which
// leaves real positions unchanged because pads are attention-excluded.
template <class Real>
struct EncodeOut {
  typename Tape<Real>::Id reps;     // (valid_len, d)
  typename Tape<Real>::Id tok_emb;  // tied embedding node for the MLM head
};

template <class Real>
EncodeOut<Real> encode(Tape<Real>& tape, EncoderModel<Real>& m, const std::vector<int>& ids,
                       std::size_t valid_len, bool train_mode, RngStream* rng) {
  const auto& cfg = m.cfg;
  if (valid_len == 0 || valid_len > ids.size())
    throw std::invalid_argument("encode: bad valid_len");
  if (valid_len > static_cast<std::size_t>(cfg.max_len))
    throw std::invalid_argument("encode: sequence length " + std::to_string(valid_len) +
                                " exceeds max_len " + std::to_string(cfg.max_len));
  using Id = typename Tape<Real>::Id;
  Real drop = train_mode ? static_cast<Real>(cfg.dropout) : Real(0);

  Id emb_table = tape.param(m.tok_emb);
  std::vector<int> tok_ids(ids.begin(), ids.begin() + valid_len);
  std::vector<int> pos_ids(valid_len);
  for (std::size_t i = 0; i < valid_len; ++i) pos_ids[i] = static_cast<int>(i);
  Id x = tape.add(tape.gather_rows(emb_table, tok_ids),
                  tape.gather_rows(tape.param(m.pos_emb), pos_ids));
  x = tape.layer_norm(x, tape.param(m.emb_ln_g), tape.param(m.emb_ln_b));
  if (drop > 0) x = tape.dropout(x, drop, *rng);

  for (auto& L : m.layers) {
    Id q = tape.add(tape.matmul(x, tape.param(L.wq)), tape.param(L.bq));
    Id k = tape.add(tape.matmul(x, tape.param(L.wk)), tape.param(L.bk));
    Id v = tape.add(tape.matmul(x, tape.param(L.wv)), tape.param(L.bv));
    Id a = tape.attention(q, k, v, cfg.n_heads, valid_len);
    Id o = tape.add(tape.matmul(a, tape.param(L.wo)), tape.param(L.bo));
    if (drop > 0) o = tape.dropout(o, drop, *rng);
    x = tape.layer_norm(tape.add(x, o), tape.param(L.ln1_g), tape.param(L.ln1_b));
    Id h = tape.gelu(tape.add(tape.matmul(x, tape.param(L.w1)), tape.param(L.b1)));
    Id f = tape.add(tape.matmul(h, tape.param(L.w2)), tape.param(L.b2));
    if (drop > 0) f = tape.dropout(f, drop, *rng);
    x = tape.layer_norm(tape.add(x, f), tape.param(L.ln2_g), tape.param(L.ln2_b));
  }
  return {x, emb_table};
}

inline std::size_t attention_len(const std::vector<int>& attention) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < attention.size(); ++i)
    if (attention[i]) n = i + 1;
  return n;
}

// Masked-token loss over a batch: summed cross-entropy at masked positions
// normalized by the batch-wide masked count; exact 0 when nothing is masked.
template <class Real>
typename Tape<Real>::Id loss_geo_mp(Tape<Real>& tape, EncoderModel<Real>& m,
                                    const std::vector<EncodeOut<Real>>& encoded,
                                    const std::vector<const std::vector<int>*>& mlm_labels) {
  using Id = typename Tape<Real>::Id;
  std::vector<Id> rep_blocks;
  std::vector<int> flat_labels;
  for (std::size_t e = 0; e < encoded.size(); ++e) {
    const auto& labels = *mlm_labels[e];
    std::vector<int> positions;
    std::size_t len = tape.value(encoded[e].reps).rows();
    for (std::size_t i = 0; i < len && i < labels.size(); ++i)
      if (labels[i] != kIgnoreIndex) {
        positions.push_back(static_cast<int>(i));
        flat_labels.push_back(labels[i]);
      }
    if (!positions.empty())
      rep_blocks.push_back(tape.gather_rows(encoded[e].reps, positions));
  }
  if (rep_blocks.empty()) return tape.scalar(Real(0));
  Id reps = tape.concat_rows(rep_blocks);
  Id logits = tape.add(tape.matmul_nt(reps, encoded[0].tok_emb), tape.param(m.mlm_bias));
  std::size_t used = 0;
  Id ce = tape.cross_entropy_sum(logits, flat_labels, &used);
  return tape.scale(ce, Real(1) / Real(used));
}

// Mean over geohash positions and batch of 33-way cross-entropy from [CLS].
template <class Real>
typename Tape<Real>::Id loss_geo_cp(Tape<Real>& tape, EncoderModel<Real>& m,
                                    const std::vector<typename Tape<Real>::Id>& cls_rows,
                                    const std::vector<std::string>& targets) {
  using Id = typename Tape<Real>::Id;
  std::size_t B = cls_rows.size();
  Id cls = tape.concat_rows(cls_rows);  // (B, d)
  Id total = tape.scalar(Real(0));
  for (int pos = 0; pos < m.cfg.n_geohash; ++pos) {
    auto& H = m.geohash_heads[pos];
    std::vector<int> labels(B);
    for (std::size_t b = 0; b < B; ++b) {
      if (static_cast<int>(targets[b].size()) != m.cfg.n_geohash)
        throw std::invalid_argument("loss_geo_cp: target '" + targets[b] + "' has wrong length");
      labels[b] = geohash_char_class(targets[b][pos]);
    }
    Id h = tape.gelu(tape.add(tape.matmul(cls, tape.param(H.w1)), tape.param(H.b1)));
    Id logits = tape.add(tape.matmul(h, tape.param(H.w2)), tape.param(H.b2));
    total = tape.add(total, tape.cross_entropy_sum(logits, labels, nullptr));
  }
  return tape.scale(total, Real(1) / Real(m.cfg.n_geohash * B));
}

// InfoNCE over [CLS] embeddings; negatives are the other positives in batch.
// The literal-denominator variant uses only diagonal similarities.
template <class Real>
typename Tape<Real>::Id loss_ucbl(Tape<Real>& tape, const EncoderConfig& cfg,
                                  typename Tape<Real>::Id anchors,
                                  typename Tape<Real>::Id positives) {
  using Id = typename Tape<Real>::Id;
  std::size_t B = tape.value(anchors).rows();
  Id ua = tape.l2_normalize_rows(anchors);
  Id up = tape.l2_normalize_rows(positives);
  Real inv_tau = Real(1) / static_cast<Real>(cfg.tau);
  std::vector<int> labels(B);
  Id sims;
  if (cfg.ucbl_literal_denominator) {
    Id diag = tape.mul(ua, up);  // row-wise products; row sums are the cosines
    Id ones_col = tape.input(Array<Real>({tape.value(diag).cols(), std::size_t(1)},
                                         std::vector<Real>(tape.value(diag).cols(), Real(1))));
    Id cos = tape.matmul(diag, ones_col);               // (B, 1)
    Id row = tape.transpose(cos);                       // (1, B)
    Id ones_rows = tape.input(Array<Real>({B, std::size_t(1)}, std::vector<Real>(B, Real(1))));
    sims = tape.scale(tape.matmul(ones_rows, row), inv_tau);  // every row = diagonal sims
  } else {
    sims = tape.scale(tape.matmul_nt(ua, up), inv_tau);  // (B, B) cross-pair sims
  }
  for (std::size_t i = 0; i < B; ++i) labels[i] = static_cast<int>(i);
  Id ce = tape.cross_entropy_sum(sims, labels, nullptr);
  return tape.scale(ce, Real(1) / Real(B));
}

// Per example: (1/m) sum over query tokens of phrase-order CE + token-order
// CE, then mean over the batch.
template <class Real>
typename Tape<Real>::Id loss_ptop(Tape<Real>& tape, EncoderModel<Real>& m,
                                  const std::vector<typename Tape<Real>::Id>& query_reps,
                                  const std::vector<const OrderLabels*>& labels) {
  using Id = typename Tape<Real>::Id;
  std::size_t B = query_reps.size();
  std::vector<Id> blocks;
  std::vector<std::size_t> lens;
  for (std::size_t e = 0; e < B; ++e) {
    std::size_t mlen = tape.value(query_reps[e]).rows();
    if (labels[e]->phrase_order.size() != mlen || labels[e]->token_order.size() != mlen)
      throw std::invalid_argument("loss_ptop: label count does not match query length");
    lens.push_back(mlen);
    blocks.push_back(query_reps[e]);
  }
  Id reps = tape.concat_rows(blocks);  // (sum m, d)
  Id hidden = tape.gelu(tape.add(tape.matmul(reps, tape.param(m.ph_w1)), tape.param(m.ph_b1)));
  Id phrase_logits = tape.add(tape.matmul(hidden, tape.param(m.ph_w2)), tape.param(m.ph_b2));
  Id token_in = m.cfg.ptop_token_head_reads_hidden ? hidden : phrase_logits;
  Id th = tape.gelu(tape.add(tape.matmul(token_in, tape.param(m.tk_w1)), tape.param(m.tk_b1)));
  Id token_logits = tape.add(tape.matmul(th, tape.param(m.tk_w2)), tape.param(m.tk_b2));

  Id total = tape.scalar(Real(0));
  std::size_t off = 0;
  for (std::size_t e = 0; e < B; ++e) {
    std::vector<int> rows(lens[e]);
    std::vector<int> ya(lens[e]), yb(lens[e]);
    for (std::size_t i = 0; i < lens[e]; ++i) {
      rows[i] = static_cast<int>(off + i);
      int a = labels[e]->phrase_order[i], b = labels[e]->token_order[i];
      if (a < 1 || a > m.cfg.q_max)
        throw std::invalid_argument("loss_ptop: phrase order label " + std::to_string(a) +
                                    " outside [1," + std::to_string(m.cfg.q_max) + "]");
      if (b < 1 || b > m.cfg.r_max)
        throw std::invalid_argument("loss_ptop: token order label " + std::to_string(b) +
                                    " outside [1," + std::to_string(m.cfg.r_max) + "]");
      ya[i] = a - 1;
      yb[i] = b - 1;
    }
    Id pa = tape.cross_entropy_sum(tape.gather_rows(phrase_logits, rows), ya, nullptr);
    Id pb = tape.cross_entropy_sum(tape.gather_rows(token_logits, rows), yb, nullptr);
    total = tape.add(total, tape.scale(tape.add(pa, pb), Real(1) / Real(lens[e])));
    off += lens[e];
  }
  return tape.scale(total, Real(1) / Real(B));
}

struct TaskFlags {
  bool geo_mp = true;
  bool geo_cp = true;
  bool ucbl = true;
  bool ptop = true;

  bool any() const { return geo_mp || geo_cp || ucbl || ptop; }
  bool enabled(Task t) const {
    switch (t) {
      case Task::Shared: return true;
      case Task::GeoMP: return geo_mp;
      case Task::GeoCP: return geo_cp;
      case Task::Ucbl: return ucbl;
      case Task::Ptop: return ptop;
    }
    return true;
  }
};

template <class Real>
struct BatchLosses {
  typename Tape<Real>::Id geo_mp, geo_cp, ucbl, ptop, total;
};

// Forward pass of the whole joint objective over one batch.
template <class Real>
BatchLosses<Real> forward_batch(Tape<Real>& tape, EncoderModel<Real>& m,
                                const std::vector<PretrainExample>& batch,
                                const TaskFlags& flags, bool train_mode, RngStream* rng) {
  using Id = typename Tape<Real>::Id;
  BatchLosses<Real> out;
  Id zero = tape.scalar(Real(0));
  out.geo_mp = out.geo_cp = out.ucbl = out.ptop = zero;

  if (flags.geo_mp || flags.geo_cp) {
    std::vector<EncodeOut<Real>> joint;
    std::vector<const std::vector<int>*> mlm_labels;
    std::vector<Id> cls_rows;
    std::vector<std::string> targets;
    for (const auto& ex : batch) {
      auto enc = encode(tape, m, ex.masked_ids, attention_len(ex.attention_mask), train_mode, rng);
      joint.push_back(enc);
      mlm_labels.push_back(&ex.mlm_labels);
      cls_rows.push_back(tape.row(enc.reps, 0));
      targets.push_back(ex.geohash_target);
    }
    if (flags.geo_mp) out.geo_mp = loss_geo_mp(tape, m, joint, mlm_labels);
    if (flags.geo_cp) out.geo_cp = loss_geo_cp(tape, m, cls_rows, targets);
  }

  if (flags.ucbl) {
    std::vector<Id> anchor_rows, pos_rows;
    for (const auto& ex : batch) {
      auto ea = encode(tape, m, ex.anchor_ids, attention_len(ex.anchor_attention), train_mode, rng);
      auto ep = encode(tape, m, ex.positive_ids, attention_len(ex.positive_attention), train_mode, rng);
      anchor_rows.push_back(tape.row(ea.reps, 0));
      pos_rows.push_back(tape.row(ep.reps, 0));
    }
    out.ucbl = loss_ucbl(tape, m.cfg, tape.concat_rows(anchor_rows), tape.concat_rows(pos_rows));
  }

  if (flags.ptop) {
    std::vector<Id> query_reps;
    std::vector<const OrderLabels*> order_labels;
    for (const auto& ex : batch) {
      auto es = encode(tape, m, ex.shuffled_ids, attention_len(ex.shuffled_attention), train_mode, rng);
      std::size_t mlen = ex.order.phrase_order.size();
      std::vector<int> rows(mlen);
      for (std::size_t i = 0; i < mlen; ++i) rows[i] = static_cast<int>(i + 1);  // skip [CLS]
      query_reps.push_back(tape.gather_rows(es.reps, rows));
      order_labels.push_back(&ex.order);
    }
    out.ptop = loss_ptop(tape, m, query_reps, order_labels);
  }

  out.total = tape.add(tape.add(out.geo_mp, out.geo_cp), tape.add(out.ucbl, out.ptop));
  for (auto [id, name] : {std::pair<Id, const char*>{out.geo_mp, "geo_mp"},
                          {out.geo_cp, "geo_cp"},
                          {out.ucbl, "ucbl"},
                          {out.ptop, "ptop"}}) {
    if (!std::isfinite(static_cast<double>(tape.value(id).v[0])))
      throw std::runtime_error(std::string("forward_batch: non-finite loss component ") + name);
  }
  return out;
}

}  // namespace quert
