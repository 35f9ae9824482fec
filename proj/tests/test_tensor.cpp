#include <doctest.h>

#include <cmath>

#include "quert/tensor.hpp"

using namespace quert;

TEST_CASE("softmax of equal logits is uniform") {
  Tape<double> t;
  auto logits = t.input(Array<double>({1, 3}, {0.0, 0.0, 0.0}));
  auto s = t.softmax_rows(logits);
  for (int i = 0; i < 3; ++i) CHECK(t.value(s).v[i] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  RngStream rng(7);
  Tape<double> t;
  Array<double> a({5, 33});
  for (auto& x : a.v) x = rng.normal() * 3.0;
  auto s = t.softmax_rows(t.input(a));
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 33; ++c) {
      CHECK(t.value(s).at(r, c) >= 0.0);
      sum += t.value(s).at(r, c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross-entropy of uniform logits over 33 classes is ln 33") {
  Tape<double> t;
  Array<double> logits({1, 33});
  auto ce = t.cross_entropy_sum(t.input(logits), {7}, nullptr);
  CHECK(t.value(ce).v[0] == doctest::Approx(std::log(33.0)).epsilon(1e-9));
}

TEST_CASE("cosine of a vector with itself is 1") {
  Tape<double> t;
  auto a = t.input(Array<double>({1, 4}, {0.3, -1.2, 4.0, 0.01}));
  auto c = t.cosine_rows(a, a);
  CHECK(t.value(c).v[0] == doctest::Approx(1.0));
}

TEST_CASE("backward of x dot x at x=3") {
  Tape<double> t;
  Parameter<double> x("x", Array<double>({1, 1}, {3.0}));
  auto xid = t.param(x);
  auto loss = t.sum(t.mul(xid, xid));
  t.backward(loss);
  CHECK(x.grad.v[0] == doctest::Approx(6.0));
}

TEST_CASE("backward of 0*x gives zero gradient") {
  Tape<double> t;
  Parameter<double> x("x", Array<double>({1, 1}, {5.0}));
  auto loss = t.sum(t.scale(t.param(x), 0.0));
  t.backward(loss);
  CHECK(x.grad.v[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape<double> t;
  auto a = t.input(Array<double>({2, 2}));
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("shape mismatch errors name the op and shapes") {
  Tape<double> t;
  auto a = t.input(Array<double>({2, 3}));
  auto b = t.input(Array<double>({2, 3}));
  try {
    t.matmul(a, b);
    FAIL("expected throw");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
  }
}

TEST_CASE("rng determinism is bitwise") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("rng seek replays the stream") {
  RngStream a(9);
  for (int i = 0; i < 17; ++i) a.next_u64();
  std::uint64_t next = a.next_u64();
  RngStream b(9);
  b.seek(17);
  CHECK(b.next_u64() == next);
}

TEST_CASE("dropout disabled is identity") {
  Tape<double> t;
  RngStream rng(1);
  auto a = t.input(Array<double>({2, 2}, {1, 2, 3, 4}));
  auto d = t.dropout(a, 0.0, rng);
  CHECK(d == a);
}

TEST_CASE("l2 normalize rejects zero rows") {
  Tape<double> t;
  auto a = t.input(Array<double>({1, 3}, {0, 0, 0}));
  CHECK_THROWS(t.l2_normalize_rows(a));
}

TEST_CASE("transpose round trip") {
  Tape<double> t;
  auto a = t.input(Array<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto tt = t.transpose(t.transpose(a));
  CHECK(t.value(tt).v == t.value(a).v);
}
