#pragma once

// Reverse-mode tape over dense row-major arrays. Ops append nodes to the tape;
// backward() walks the tape in reverse creation order, which is a valid
// topological order because ops only consume earlier nodes. Real is float for
// training and double for gradient checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "quert/rng.hpp"

namespace quert {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

template <class Real>
struct Array {
  std::vector<std::size_t> shape;
  std::vector<Real> v;

  Array() = default;
  explicit Array(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(count(), Real(0));
  }
  Array(std::vector<std::size_t> s, std::vector<Real> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != count()) throw ShapeError("Array: data length does not match shape");
  }

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  Real& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  void fill(Real x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    return out + ")";
  }
};

template <class Real>
struct Parameter {
  std::string name;
  Array<Real> value;
  Array<Real> grad;

  Parameter() = default;
  Parameter(std::string n, Array<Real> val) : name(std::move(n)), value(std::move(val)) {
    grad = Array<Real>(value.shape);
  }
  void zero_grad() { grad.fill(Real(0)); }
};

// Label value meaning "no loss at this position".
inline constexpr int kIgnoreIndex = -100;

template <class Real>
class Tape {
 public:
  using Id = int;

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Array<Real>& value(Id id) const { return nodes_[id].value; }
  const Array<Real>& grad(Id id) const { return nodes_[id].grad; }

  Id input(Array<Real> a) { return push(std::move(a), nullptr); }

  Id scalar(Real x) { return input(Array<Real>({1}, {x})); }

  Id param(Parameter<Real>& p) {
    Parameter<Real>* pp = &p;
    Id id = push(p.value, nullptr);
    nodes_[id].back = [this, id, pp] {
      const auto& g = nodes_[id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) pp->grad.v[i] += g.v[i];
    };
    return id;
  }

  // (m,k) x (k,n) -> (m,n)
  Id matmul(Id a, Id b) {
    check2d("matmul", a);
    check2d("matmul", b);
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.cols() != B.rows())
      throw ShapeError("matmul: inner dims differ " + Array<Real>::shape_str(A.shape) + " x " +
                       Array<Real>::shape_str(B.shape));
    Array<Real> C({A.rows(), B.cols()});
    gemm(A.v.data(), B.v.data(), C.v.data(), A.rows(), A.cols(), B.cols(), false);
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, b] {
      const auto& A = val(a);
      const auto& B = val(b);
      const auto& G = nodes_[id].grad;
      // dA += G B^T ; dB += A^T G
      gemm_nt_acc(G.v.data(), B.v.data(), nodes_[a].grad.v.data(), G.rows(), G.cols(), B.rows());
      gemm_tn_acc(A.v.data(), G.v.data(), nodes_[b].grad.v.data(), A.cols(), A.rows(), G.cols());
    };
    return id;
  }

  // (m,k) x (n,k)^T -> (m,n)
  Id matmul_nt(Id a, Id b) {
    check2d("matmul_nt", a);
    check2d("matmul_nt", b);
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.cols() != B.cols())
      throw ShapeError("matmul_nt: inner dims differ " + Array<Real>::shape_str(A.shape) +
                       " x " + Array<Real>::shape_str(B.shape) + "^T");
    Array<Real> C({A.rows(), B.rows()});
    gemm_nt_plain(A.v.data(), B.v.data(), C.v.data(), A.rows(), A.cols(), B.rows());
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, b] {
      const auto& A = val(a);
      const auto& B = val(b);
      const auto& G = nodes_[id].grad;
      // dA += G B ; dB += G^T A
      gemm(G.v.data(), B.v.data(), nodes_[a].grad.v.data(), G.rows(), G.cols(), B.cols(), true);
      gemm_tn_acc(G.v.data(), A.v.data(), nodes_[b].grad.v.data(), G.cols(), G.rows(), A.cols());
    };
    return id;
  }

  // Same shape, or b is a length-n vector broadcast over the rows of a.
  Id add(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    bool bias = !A.same_shape(B);
    if (bias && !(B.shape.size() == 1 && B.v.size() == A.cols()))
      throw ShapeError("add: shapes " + Array<Real>::shape_str(A.shape) + " vs " +
                       Array<Real>::shape_str(B.shape));
    Array<Real> C(A.shape);
    if (bias) {
      for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) C.at(r, c) = A.at(r, c) + B.v[c];
    } else {
      for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] + B.v[i];
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, b, bias] {
      const auto& G = nodes_[id].grad;
      auto& dA = nodes_[a].grad;
      auto& dB = nodes_[b].grad;
      for (std::size_t i = 0; i < G.v.size(); ++i) dA.v[i] += G.v[i];
      if (bias) {
        for (std::size_t r = 0; r < G.rows(); ++r)
          for (std::size_t c = 0; c < G.cols(); ++c) dB.v[c] += G.at(r, c);
      } else {
        for (std::size_t i = 0; i < G.v.size(); ++i) dB.v[i] += G.v[i];
      }
    };
    return id;
  }

  Id mul(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (!A.same_shape(B))
      throw ShapeError("mul: shapes " + Array<Real>::shape_str(A.shape) + " vs " +
                       Array<Real>::shape_str(B.shape));
    Array<Real> C(A.shape);
    for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] * B.v[i];
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, b] {
      const auto& G = nodes_[id].grad;
      const auto& A = val(a);
      const auto& B = val(b);
      for (std::size_t i = 0; i < G.v.size(); ++i) {
        nodes_[a].grad.v[i] += G.v[i] * B.v[i];
        nodes_[b].grad.v[i] += G.v[i] * A.v[i];
      }
    };
    return id;
  }

  Id scale(Id a, Real s) {
    Array<Real> C(val(a).shape);
    for (std::size_t i = 0; i < C.v.size(); ++i) C.v[i] = val(a).v[i] * s;
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, s] {
      const auto& G = nodes_[id].grad;
      for (std::size_t i = 0; i < G.v.size(); ++i) nodes_[a].grad.v[i] += G.v[i] * s;
    };
    return id;
  }

  // Row gather; doubles as embedding lookup when `a` is an embedding table.
  Id gather_rows(Id a, std::vector<int> ids) {
    check2d("gather_rows", a);
    const auto& A = val(a);
    for (int r : ids)
      if (r < 0 || static_cast<std::size_t>(r) >= A.rows())
        throw ShapeError("gather_rows: row " + std::to_string(r) + " out of " +
                         std::to_string(A.rows()));
    Array<Real> C({ids.size(), A.cols()});
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < A.cols(); ++c) C.at(i, c) = A.at(ids[i], c);
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, ids = std::move(ids)] {
      const auto& G = nodes_[id].grad;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t c = 0; c < G.cols(); ++c) dA.at(ids[i], c) += G.at(i, c);
    };
    return id;
  }

  // Stack 1-D vectors of equal length into a matrix.
  Id stack_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("stack_rows: empty input");
    std::size_t d = val(parts[0]).v.size();
    Array<Real> C({parts.size(), d});
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (val(parts[i]).v.size() != d) throw ShapeError("stack_rows: ragged rows");
      for (std::size_t c = 0; c < d; ++c) C.at(i, c) = val(parts[i]).v[c];
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, parts] {
      const auto& G = nodes_[id].grad;
      for (std::size_t i = 0; i < parts.size(); ++i)
        for (std::size_t c = 0; c < G.cols(); ++c) nodes_[parts[i]].grad.v[c] += G.at(i, c);
    };
    return id;
  }

  Id row(Id a, std::size_t r) { return gather_rows(a, {static_cast<int>(r)}); }

  // Vertically concatenate matrices with equal column counts.
  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    std::size_t d = val(parts[0]).cols();
    std::size_t total = 0;
    for (Id p : parts) {
      if (val(p).cols() != d) throw ShapeError("concat_rows: column counts differ");
      total += val(p).rows();
    }
    Array<Real> C({total, d});
    std::size_t off = 0;
    for (Id p : parts) {
      const auto& A = val(p);
      std::copy(A.v.begin(), A.v.end(), C.v.begin() + off * d);
      off += A.rows();
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, parts] {
      const auto& G = nodes_[id].grad;
      std::size_t d = G.cols();
      std::size_t off = 0;
      for (Id p : parts) {
        auto& dP = nodes_[p].grad;
        for (std::size_t i = 0; i < dP.v.size(); ++i) dP.v[i] += G.v[off * d + i];
        off += dP.rows();
      }
    };
    return id;
  }

  Id transpose(Id a) {
    check2d("transpose", a);
    const auto& A = val(a);
    Array<Real> C({A.cols(), A.rows()});
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) C.at(c, r) = A.at(r, c);
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a] {
      const auto& G = nodes_[id].grad;
      auto& dA = nodes_[a].grad;
      for (std::size_t r = 0; r < G.rows(); ++r)
        for (std::size_t c = 0; c < G.cols(); ++c) dA.at(c, r) += G.at(r, c);
    };
    return id;
  }

  Id layer_norm(Id a, Id gamma, Id beta, Real eps = Real(1e-5)) {
    check2d("layer_norm", a);
    const auto& A = val(a);
    std::size_t n = A.cols();
    if (val(gamma).v.size() != n || val(beta).v.size() != n)
      throw ShapeError("layer_norm: gamma/beta length != " + std::to_string(n));
    Array<Real> C(A.shape);
    Array<Real> xhat(A.shape);
    std::vector<Real> inv_std(A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      Real mean = 0;
      for (std::size_t c = 0; c < n; ++c) mean += A.at(r, c);
      mean /= Real(n);
      Real var = 0;
      for (std::size_t c = 0; c < n; ++c) {
        Real d = A.at(r, c) - mean;
        var += d * d;
      }
      var /= Real(n);
      inv_std[r] = Real(1) / std::sqrt(var + eps);
      for (std::size_t c = 0; c < n; ++c) {
        xhat.at(r, c) = (A.at(r, c) - mean) * inv_std[r];
        C.at(r, c) = xhat.at(r, c) * val(gamma).v[c] + val(beta).v[c];
      }
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, gamma, beta, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)] {
      const auto& G = nodes_[id].grad;
      std::size_t n = G.cols();
      auto& dA = nodes_[a].grad;
      auto& dG = nodes_[gamma].grad;
      auto& dB = nodes_[beta].grad;
      const auto& g = val(gamma);
      for (std::size_t r = 0; r < G.rows(); ++r) {
        Real sum_dy = 0, sum_dy_x = 0;
        for (std::size_t c = 0; c < n; ++c) {
          Real dy = G.at(r, c) * g.v[c];
          sum_dy += dy;
          sum_dy_x += dy * xhat.at(r, c);
          dG.v[c] += G.at(r, c) * xhat.at(r, c);
          dB.v[c] += G.at(r, c);
        }
        for (std::size_t c = 0; c < n; ++c) {
          Real dy = G.at(r, c) * g.v[c];
          dA.at(r, c) +=
              inv_std[r] * (dy - sum_dy / Real(n) - xhat.at(r, c) * sum_dy_x / Real(n));
        }
      }
    };
    return id;
  }

  Id softmax_rows(Id a) {
    check2d("softmax_rows", a);
    const auto& A = val(a);
    Array<Real> C(A.shape);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      Real mx = A.at(r, 0);
      for (std::size_t c = 1; c < A.cols(); ++c) mx = std::max(mx, A.at(r, c));
      Real z = 0;
      for (std::size_t c = 0; c < A.cols(); ++c) {
        C.at(r, c) = std::exp(A.at(r, c) - mx);
        z += C.at(r, c);
      }
      for (std::size_t c = 0; c < A.cols(); ++c) C.at(r, c) /= z;
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a] {
      const auto& G = nodes_[id].grad;
      const auto& S = nodes_[id].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t r = 0; r < G.rows(); ++r) {
        Real dot = 0;
        for (std::size_t c = 0; c < G.cols(); ++c) dot += G.at(r, c) * S.at(r, c);
        for (std::size_t c = 0; c < G.cols(); ++c)
          dA.at(r, c) += S.at(r, c) * (G.at(r, c) - dot);
      }
    };
    return id;
  }

  Id gelu(Id a) {
    const auto& A = val(a);
    Array<Real> C(A.shape);
    for (std::size_t i = 0; i < A.v.size(); ++i) {
      Real x = A.v[i];
      C.v[i] = x * Real(0.5) * (Real(1) + std::erf(x * Real(0.7071067811865476)));
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a] {
      const auto& G = nodes_[id].grad;
      const auto& A = val(a);
      for (std::size_t i = 0; i < G.v.size(); ++i) {
        Real x = A.v[i];
        Real cdf = Real(0.5) * (Real(1) + std::erf(x * Real(0.7071067811865476)));
        Real pdf = std::exp(-Real(0.5) * x * x) * Real(0.3989422804014327);
        nodes_[a].grad.v[i] += G.v[i] * (cdf + x * pdf);
      }
    };
    return id;
  }

  // Inverted dropout; identity when p == 0.
  Id dropout(Id a, Real p, RngStream& rng) {
    if (p <= Real(0)) return a;
    const auto& A = val(a);
    Array<Real> mask(A.shape);
    Real keep = Real(1) - p;
    for (std::size_t i = 0; i < mask.v.size(); ++i)
      mask.v[i] = (rng.uniform() < static_cast<double>(p)) ? Real(0) : Real(1) / keep;
    Array<Real> C(A.shape);
    for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] * mask.v[i];
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, mask = std::move(mask)] {
      const auto& G = nodes_[id].grad;
      for (std::size_t i = 0; i < G.v.size(); ++i) nodes_[a].grad.v[i] += G.v[i] * mask.v[i];
    };
    return id;
  }

  // Scaled dot-product multi-head self-attention over one (len, d) sequence.
  // Positions >= valid_len are excluded as keys and produce no gradient.
  Id attention(Id q, Id k, Id v, std::size_t n_heads, std::size_t valid_len) {
    check2d("attention", q);
    const auto& Q = val(q);
    const auto& K = val(k);
    const auto& V = val(v);
    std::size_t len = Q.rows(), d = Q.cols();
    if (!K.same_shape(Q) || !V.same_shape(Q))
      throw ShapeError("attention: q/k/v shapes differ");
    if (d % n_heads != 0) throw ShapeError("attention: d_model not divisible by n_heads");
    if (valid_len == 0 || valid_len > len) throw ShapeError("attention: bad valid_len");
    std::size_t dh = d / n_heads;
    Real inv_sqrt = Real(1) / std::sqrt(Real(dh));
    Array<Real> probs({n_heads, len * valid_len});
    Array<Real> out({len, d});
    for (std::size_t h = 0; h < n_heads; ++h) {
      std::size_t off = h * dh;
      for (std::size_t i = 0; i < len; ++i) {
        Real* prow = &probs.v[h * len * valid_len + i * valid_len];
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < valid_len; ++j) {
          Real s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += Q.at(i, off + c) * K.at(j, off + c);
          prow[j] = s * inv_sqrt;
          mx = std::max(mx, prow[j]);
        }
        Real z = 0;
        for (std::size_t j = 0; j < valid_len; ++j) {
          prow[j] = std::exp(prow[j] - mx);
          z += prow[j];
        }
        for (std::size_t j = 0; j < valid_len; ++j) prow[j] /= z;
        for (std::size_t c = 0; c < dh; ++c) {
          Real acc = 0;
          for (std::size_t j = 0; j < valid_len; ++j) acc += prow[j] * V.at(j, off + c);
          out.at(i, off + c) = acc;
        }
      }
    }
    Id id = push(std::move(out), nullptr);
    nodes_[id].back = [this, id, q, k, v, n_heads, valid_len, dh, inv_sqrt,
                       probs = std::move(probs)] {
      const auto& G = nodes_[id].grad;
      const auto& Q = val(q);
      const auto& K = val(k);
      const auto& V = val(v);
      auto& dQ = nodes_[q].grad;
      auto& dK = nodes_[k].grad;
      auto& dV = nodes_[v].grad;
      std::size_t len = Q.rows();
      std::vector<Real> dprob(valid_len);
      for (std::size_t h = 0; h < n_heads; ++h) {
        std::size_t off = h * dh;
        for (std::size_t i = 0; i < len; ++i) {
          const Real* prow = &probs.v[h * len * valid_len + i * valid_len];
          // dV and d(prob)
          for (std::size_t j = 0; j < valid_len; ++j) {
            Real dp = 0;
            for (std::size_t c = 0; c < dh; ++c) {
              dp += G.at(i, off + c) * V.at(j, off + c);
              // accumulate dV below, once per (j,c)
            }
            dprob[j] = dp;
          }
          for (std::size_t c = 0; c < dh; ++c) {
            Real g = G.at(i, off + c);
            for (std::size_t j = 0; j < valid_len; ++j) dV.at(j, off + c) += g * prow[j];
          }
          // softmax backward -> d(score)
          Real dot = 0;
          for (std::size_t j = 0; j < valid_len; ++j) dot += dprob[j] * prow[j];
          for (std::size_t j = 0; j < valid_len; ++j) {
            Real ds = prow[j] * (dprob[j] - dot) * inv_sqrt;
            for (std::size_t c = 0; c < dh; ++c) {
              dQ.at(i, off + c) += ds * K.at(j, off + c);
              dK.at(j, off + c) += ds * Q.at(i, off + c);
            }
          }
        }
      }
    };
    return id;
  }

  // Sum over rows of -log softmax(logits)[label], skipping ignored labels.
  // Count of contributing rows is written to *n_used.
  Id cross_entropy_sum(Id logits, const std::vector<int>& labels, std::size_t* n_used) {
    check2d("cross_entropy", logits);
    const auto& L = val(logits);
    if (labels.size() != L.rows())
      throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(L.rows()) + " rows");
    Array<Real> probs(L.shape);
    Real total = 0;
    std::size_t used = 0;
    for (std::size_t r = 0; r < L.rows(); ++r) {
      Real mx = L.at(r, 0);
      for (std::size_t c = 1; c < L.cols(); ++c) mx = std::max(mx, L.at(r, c));
      Real z = 0;
      for (std::size_t c = 0; c < L.cols(); ++c) {
        probs.at(r, c) = std::exp(L.at(r, c) - mx);
        z += probs.at(r, c);
      }
      for (std::size_t c = 0; c < L.cols(); ++c) probs.at(r, c) /= z;
      int y = labels[r];
      if (y == kIgnoreIndex) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= L.cols())
        throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of " +
                         std::to_string(L.cols()) + " classes");
      total -= std::log(std::max(probs.at(r, y), std::numeric_limits<Real>::min()));
      ++used;
    }
    if (n_used) *n_used = used;
    Id id = push(Array<Real>({1}, {total}), nullptr);
    nodes_[id].back = [this, id, logits, labels, probs = std::move(probs)] {
      Real g = nodes_[id].grad.v[0];
      auto& dL = nodes_[logits].grad;
      for (std::size_t r = 0; r < probs.rows(); ++r) {
        int y = labels[r];
        if (y == kIgnoreIndex) continue;
        for (std::size_t c = 0; c < probs.cols(); ++c)
          dL.at(r, c) += g * (probs.at(r, c) - (static_cast<int>(c) == y ? Real(1) : Real(0)));
      }
    };
    return id;
  }

  Id sum(Id a) {
    Real s = 0;
    for (Real x : val(a).v) s += x;
    Id id = push(Array<Real>({1}, {s}), nullptr);
    nodes_[id].back = [this, id, a] {
      Real g = nodes_[id].grad.v[0];
      for (auto& d : nodes_[a].grad.v) d += g;
    };
    return id;
  }

  Id mean(Id a) { return scale(sum(a), Real(1) / Real(val(a).v.size())); }

  Id l2_normalize_rows(Id a, Real eps = Real(1e-12)) {
    check2d("l2_normalize_rows", a);
    const auto& A = val(a);
    std::vector<Real> inv_norm(A.rows());
    Array<Real> C(A.shape);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      Real s = 0;
      for (std::size_t c = 0; c < A.cols(); ++c) s += A.at(r, c) * A.at(r, c);
      if (s <= eps) throw ShapeError("l2_normalize_rows: zero-norm row " + std::to_string(r));
      inv_norm[r] = Real(1) / std::sqrt(s);
      for (std::size_t c = 0; c < A.cols(); ++c) C.at(r, c) = A.at(r, c) * inv_norm[r];
    }
    Id id = push(std::move(C), nullptr);
    nodes_[id].back = [this, id, a, inv_norm = std::move(inv_norm)] {
      const auto& G = nodes_[id].grad;
      const auto& U = nodes_[id].value;  // normalized rows
      auto& dA = nodes_[a].grad;
      for (std::size_t r = 0; r < G.rows(); ++r) {
        Real dot = 0;
        for (std::size_t c = 0; c < G.cols(); ++c) dot += G.at(r, c) * U.at(r, c);
        for (std::size_t c = 0; c < G.cols(); ++c)
          dA.at(r, c) += inv_norm[r] * (G.at(r, c) - dot * U.at(r, c));
      }
    };
    return id;
  }

  // Row-wise cosine similarity between two (m, d) matrices -> (m, 1).
  Id cosine_rows(Id a, Id b) {
    Id ua = l2_normalize_rows(a);
    Id ub = l2_normalize_rows(b);
    Id prod = mul(ua, ub);
    const auto& P = val(prod);
    // Row-sum via mul-by-ones matmul keeps everything on the tape.
    Id ones = input(Array<Real>({P.cols(), std::size_t(1)},
                                std::vector<Real>(P.cols(), Real(1))));
    return matmul(prod, ones);
  }

  void backward(Id loss) {
    if (val(loss).v.size() != 1)
      throw ShapeError("backward: loss is not a scalar, shape " +
                       Array<Real>::shape_str(val(loss).shape));
    for (auto& n : nodes_) n.grad.fill(Real(0));
    nodes_[loss].grad.v[0] = Real(1);
    for (std::size_t i = nodes_.size(); i-- > 0;)
      if (nodes_[i].back) nodes_[i].back();
  }

 private:
  struct Node {
    Array<Real> value;
    Array<Real> grad;
    std::function<void()> back;
  };

  std::vector<Node> nodes_;

  const Array<Real>& val(Id id) const { return nodes_[id].value; }

  Id push(Array<Real> a, std::nullptr_t) {
    Node n;
    n.grad = Array<Real>(a.shape);
    n.value = std::move(a);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  void check2d(const char* op, Id a) const {
    if (val(a).shape.size() != 2)
      throw ShapeError(std::string(op) + ": expected 2-D tensor, got " +
                       Array<Real>::shape_str(val(a).shape));
  }

  // C (+)= A(m,k) B(k,n)
  static void gemm(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k,
                   std::size_t n, bool acc) {
    if (!acc)
      for (std::size_t i = 0; i < m * n; ++i) C[i] = Real(0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        Real a = A[i * k + p];
        const Real* brow = B + p * n;
        Real* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
  }

  // C = A(m,k) B(n,k)^T
  static void gemm_nt_plain(const Real* A, const Real* B, Real* C, std::size_t m,
                            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Real s = 0;
        for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
        C[i * n + j] = s;
      }
  }

  // C += A(m,k) B(n,k)^T
  static void gemm_nt_acc(const Real* A, const Real* B, Real* C, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Real s = 0;
        for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
        C[i * n + j] += s;
      }
  }

  // C += A(k,m)^T B(k,n)  (result m x n)
  static void gemm_tn_acc(const Real* A, const Real* B, Real* C, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real* arow = A + p * m;
      const Real* brow = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        Real a = arow[i];
        Real* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  }
};

}  // namespace quert
