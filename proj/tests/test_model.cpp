#include <doctest.h>

#include <cmath>
#include <vector>

#include <quert/gradcheck.hpp>
#include <quert/model.hpp>

using namespace quert;

namespace {

// Small corpus + model fixture shared by the loss tests.
struct Fixture {
  SynthConfig scfg;
  Gazetteer gaz;
  std::vector<QueryClickPair> pairs;
  Vocab vocab;
  TaskGenConfig gcfg;

  Fixture() {
    scfg.n_pairs = 200;
    scfg.n_cities = 8;
    scfg.n_pois_per_city = 3;
    scfg.seed = 3;
    gaz = generate_gazetteer(scfg, RngStream(scfg.seed));
    pairs = synthesize_corpus(scfg, gaz);
    vocab = build_vocab(pairs);
  }

  EncoderConfig ecfg(int d_model = 32, int n_layers = 1, int n_heads = 2, int d_ff = 64) const {
    EncoderConfig c;
    c.vocab_size = static_cast<int>(vocab.size());
    c.d_model = d_model;
    c.n_layers = n_layers;
    c.n_heads = n_heads;
    c.d_ff = d_ff;
    c.dropout = 0.0;
    return c;
  }

  std::vector<PretrainExample> batch(std::size_t n, std::uint64_t seed = 7) const {
    return build_batch(pairs, gaz, vocab, gcfg, RngStream(seed), n);
  }
};

template <class Real>
double scalar_of(Tape<Real>& tape, typename Tape<Real>::Id id) {
  return static_cast<double>(tape.value(id).v[0]);
}

}  // namespace

TEST_CASE("config validation and json round-trip") {
  EncoderConfig c;
  c.vocab_size = 100;
  c.validate();
  EncoderConfig r = EncoderConfig::from_json(c.to_json());
  CHECK(r.vocab_size == 100);
  CHECK(r.d_model == c.d_model);
  CHECK(r.tau == c.tau);
  c.d_model = 30;  // not divisible by 4 heads
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = EncoderConfig{};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // vocab_size unset
}

TEST_CASE("model initialization is deterministic with owned manifests") {
  Fixture f;
  EncoderModel<float> a(f.ecfg(), RngStream(11));
  EncoderModel<float> b(f.ecfg(), RngStream(11));
  REQUIRE(a.params.size() == b.params.size());
  CHECK(a.params.size() == a.owner.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i]->name == b.params[i]->name);
    CHECK(a.params[i]->value.v == b.params[i]->value.v);
  }
  int by_task[5] = {0, 0, 0, 0, 0};
  for (Task t : a.owner) ++by_task[static_cast<int>(t)];
  CHECK(by_task[static_cast<int>(Task::Shared)] > 0);
  CHECK(by_task[static_cast<int>(Task::GeoMP)] == 1);    // tied head: bias only
  CHECK(by_task[static_cast<int>(Task::GeoCP)] == 24);   // 6 heads x 4 tensors
  CHECK(by_task[static_cast<int>(Task::Ucbl)] == 0);     // reads [CLS] directly
  CHECK(by_task[static_cast<int>(Task::Ptop)] == 8);
  CHECK(a.n_scalars() > 0);
}

TEST_CASE("encode is deterministic in eval mode and pad-append invariant") {
  Fixture f;
  EncoderModel<float> m(f.ecfg(), RngStream(2));
  std::vector<int> ids = {Vocab::kCls, 6, 7, 8, Vocab::kSep};
  Tape<float> t1, t2;
  auto r1 = encode(t1, m, ids, ids.size(), false, nullptr);
  auto r2 = encode(t2, m, ids, ids.size(), false, nullptr);
  CHECK(t1.value(r1.reps).v == t2.value(r2.reps).v);

  // Appending [PAD] beyond valid_len changes nothing.
  std::vector<int> padded = ids;
  padded.push_back(Vocab::kPad);
  padded.push_back(Vocab::kPad);
  Tape<float> t3;
  auto r3 = encode(t3, m, padded, ids.size(), false, nullptr);
  CHECK(t3.value(r3.reps).v == t1.value(r1.reps).v);

  CHECK_THROWS_AS(encode(t3, m, ids, 0, false, nullptr), std::invalid_argument);
  std::vector<int> too_long(m.cfg.max_len + 1, 6);
  CHECK_THROWS_AS(encode(t3, m, too_long, too_long.size(), false, nullptr),
                  std::invalid_argument);
}

TEST_CASE("encode depends on token positions") {
  Fixture f;
  EncoderModel<float> m(f.ecfg(), RngStream(4));
  std::vector<int> a = {Vocab::kCls, 6, 7, Vocab::kSep};
  std::vector<int> b = {Vocab::kCls, 7, 6, Vocab::kSep};
  Tape<float> ta, tb;
  auto ra = encode(ta, m, a, a.size(), false, nullptr);
  auto rb = encode(tb, m, b, b.size(), false, nullptr);
  CHECK(ta.value(ra.reps).v != tb.value(rb.reps).v);
}

TEST_CASE("initial losses sit near their uniform-prediction values") {
  Fixture f;
  EncoderConfig cfg = f.ecfg(64, 2, 4, 256);
  EncoderModel<float> m(cfg, RngStream(9));
  auto batch = f.batch(8);
  Tape<float> tape;
  auto losses = forward_batch(tape, m, batch, TaskFlags{}, false, nullptr);

  double v = static_cast<double>(cfg.vocab_size);
  CHECK(scalar_of(tape, losses.geo_mp) == doctest::Approx(std::log(v)).epsilon(0.15));
  CHECK(scalar_of(tape, losses.geo_cp) == doctest::Approx(std::log(33.0)).epsilon(0.15));
  CHECK(scalar_of(tape, losses.ucbl) == doctest::Approx(std::log(8.0)).epsilon(0.15));
  CHECK(scalar_of(tape, losses.ptop) ==
        doctest::Approx(std::log(8.0) + std::log(8.0)).epsilon(0.15));
  CHECK(scalar_of(tape, losses.total) ==
        doctest::Approx(scalar_of(tape, losses.geo_mp) + scalar_of(tape, losses.geo_cp) +
                        scalar_of(tape, losses.ucbl) + scalar_of(tape, losses.ptop))
            .epsilon(1e-6));
}

TEST_CASE("masked-token loss is exactly zero when nothing is masked") {
  Fixture f;
  EncoderModel<float> m(f.ecfg(), RngStream(1));
  auto batch = f.batch(2);
  for (auto& ex : batch) {
    for (auto& l : ex.mlm_labels) l = kIgnoreIndex;
  }
  Tape<float> tape;
  TaskFlags flags;
  flags.geo_cp = flags.ucbl = flags.ptop = false;
  auto losses = forward_batch(tape, m, batch, flags, false, nullptr);
  CHECK(scalar_of(tape, losses.geo_mp) == 0.0);
  CHECK(scalar_of(tape, losses.total) == 0.0);
}

TEST_CASE("contrastive loss closed forms") {
  EncoderConfig cfg;
  cfg.vocab_size = 10;
  cfg.d_model = 4;
  cfg.tau = 0.1;

  // Identical rows: every similarity equal, so the loss is ln B.
  for (std::size_t B : {2u, 4u}) {
    Tape<float> tape;
    Array<float> rows({B, 4});
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t c = 0; c < 4; ++c) rows.at(r, c) = 0.5f;
    auto a = tape.input(rows);
    auto p = tape.input(rows);
    auto loss = loss_ucbl(tape, cfg, a, p);
    CHECK(scalar_of(tape, loss) == doctest::Approx(std::log(double(B))).epsilon(1e-5));
  }

  // Orthogonal pairs at tau = 0.1: loss = ln(1 + (B-1)e^{-10}) ~ 4.54e-5
  // for B = 2.
  {
    Tape<float> tape;
    Array<float> a({2, 4}), p({2, 4});
    a.at(0, 0) = 1;
    a.at(1, 1) = 1;
    p.at(0, 0) = 1;
    p.at(1, 1) = 1;
    auto loss = loss_ucbl(tape, cfg, tape.input(a), tape.input(p));
    double expect = std::log(1.0 + std::exp(-10.0));
    CHECK(scalar_of(tape, loss) == doctest::Approx(expect).epsilon(1e-3));
  }

  // Literal-denominator variant ignores the off-diagonal similarities: with
  // identical rows every logit is equal so the loss is still ln B, but with
  // orthogonal pairs it reduces to ln(B) over equal diagonal logits too.
  {
    EncoderConfig lit = cfg;
    lit.ucbl_literal_denominator = true;
    Tape<float> tape;
    Array<float> a({2, 4}), p({2, 4});
    a.at(0, 0) = 1;
    a.at(1, 1) = 1;
    p.at(0, 0) = 1;
    p.at(1, 1) = 1;
    auto loss = loss_ucbl(tape, lit, tape.input(a), tape.input(p));
    CHECK(scalar_of(tape, loss) == doctest::Approx(std::log(2.0)).epsilon(1e-5));
  }
}

TEST_CASE("geohash loss on an all-pad target uses class 32") {
  Fixture f;
  EncoderModel<float> m(f.ecfg(), RngStream(6));
  Tape<float> tape;
  std::vector<int> ids = {Vocab::kCls, 6, Vocab::kSep};
  auto enc = encode(tape, m, ids, ids.size(), false, nullptr);
  std::vector<typename Tape<float>::Id> cls = {tape.row(enc.reps, 0)};
  auto loss = loss_geo_cp(tape, m, cls, {"******"});
  CHECK(scalar_of(tape, loss) == doctest::Approx(std::log(33.0)).epsilon(0.1));
  CHECK_THROWS_AS(loss_geo_cp(tape, m, cls, {"wtm"}), std::invalid_argument);
}

TEST_CASE("order loss rejects out-of-range labels") {
  Fixture f;
  EncoderModel<float> m(f.ecfg(), RngStream(6));
  Tape<float> tape;
  std::vector<int> ids = {Vocab::kCls, 6, 7, Vocab::kSep};
  auto enc = encode(tape, m, ids, ids.size(), false, nullptr);
  auto reps = tape.gather_rows(enc.reps, {1, 2});
  OrderLabels bad;
  bad.phrase_order = {1, 9};  // 9 > q_max
  bad.token_order = {1, 1};
  CHECK_THROWS_AS(loss_ptop(tape, m, {reps}, {&bad}), std::invalid_argument);
  OrderLabels mismatch;
  mismatch.phrase_order = {1};
  mismatch.token_order = {1};
  CHECK_THROWS_AS(loss_ptop(tape, m, {reps}, {&mismatch}), std::invalid_argument);
}

TEST_CASE("full joint objective passes a finite-difference gradient check") {
  Fixture f;
  EncoderConfig cfg = f.ecfg(16, 2, 2, 32);
  EncoderModel<double> m(cfg, RngStream(21));
  auto batch = f.batch(2, 17);
  GradCheckFn fn;
  fn.eval = [&](bool with_grad) {
    Tape<double> tape;
    auto losses = forward_batch(tape, m, batch, TaskFlags{}, false, nullptr);
    if (with_grad) tape.backward(losses.total);
    return static_cast<double>(tape.value(losses.total).v[0]);
  };
  // Checking every scalar is too slow; spot-check a representative subset.
  std::vector<Parameter<double>*> subset;
  for (auto* p : m.params) {
    if (p->name == "emb_ln_g" || p->name == "layer0.bq" || p->name == "layer1.b2" ||
        p->name == "mlm_bias" || p->name == "geohash0.b2" || p->name == "ptop.ph_b2" ||
        p->name == "ptop.tk_b2" || p->name == "layer0.ln2_b")
      subset.push_back(p);
  }
  REQUIRE(subset.size() == 8);
  CHECK(grad_check(fn, subset, 1e-5) < 1e-4);
}

TEST_CASE("disabled-task gradients never reach their heads") {
  Fixture f;
  EncoderModel<float> m(f.ecfg(), RngStream(31));
  auto batch = f.batch(4);
  TaskFlags flags;
  flags.geo_cp = false;
  flags.ptop = false;
  Tape<float> tape;
  m.zero_grads();
  auto losses = forward_batch(tape, m, batch, flags, false, nullptr);
  tape.backward(losses.total);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    bool owned_by_disabled = m.owner[i] == Task::GeoCP || m.owner[i] == Task::Ptop;
    bool all_zero = true;
    for (float g : m.params[i]->grad.v)
      if (g != 0.0f) all_zero = false;
    if (owned_by_disabled) {
      CHECK(all_zero);
    } else if (m.owner[i] == Task::Shared && m.params[i]->name == "tok_emb") {
      CHECK_FALSE(all_zero);
    }
  }
}
