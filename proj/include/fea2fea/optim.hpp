#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fea2fea/tensor.hpp"

namespace fea2fea {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its `grad`.
inline void adam_step(std::span<Parameter> params, AdamState& state, const AdamOptions& opt) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].value.size(), 0.0);
      state.v[i].assign(params[i].value.size(), 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.data;
    const auto& g = params[i].grad.data;
    if (g.size() != w.size()) continue;  // never touched by backward
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] + opt.weight_decay * w[k];
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * gk;
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * gk * gk;
      w[k] -= opt.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt.eps);
    }
  }
}

}  // namespace fea2fea
