#pragma once

// Central finite-difference gradient checker. Works in float64 only; callers
// must disable dropout so the checked function is deterministic.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quert/tensor.hpp"

namespace quert {

// fn() must evaluate the loss at the current parameter values and, when
// `with_grad`, populate parameter grads via a fresh backward pass.
struct GradCheckFn {
  std::function<double(bool with_grad)> eval;
};

inline double grad_check(const GradCheckFn& fn, std::vector<Parameter<double>*> params,
                         double epsilon = 1e-5) {
  for (auto* p : params) p->zero_grad();
  double base = fn.eval(true);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad.v);

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    for (std::size_t i = 0; i < p.value.v.size(); ++i) {
      double saved = p.value.v[i];
      p.value.v[i] = saved + epsilon;
      double up = fn.eval(false);
      p.value.v[i] = saved - epsilon;
      double down = fn.eval(false);
      p.value.v[i] = saved;
      double numeric = (up - down) / (2.0 * epsilon);
      double a = analytic[pi][i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw std::runtime_error("grad_check: non-finite gradient at " + p.name +
                                 "[" + std::to_string(i) + "]");
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace quert
