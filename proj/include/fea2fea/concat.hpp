#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fea2fea/autodiff.hpp"
#include "fea2fea/graph_ops.hpp"
#include "fea2fea/layers.hpp"

// Operators that merge k per-feature embeddings e_1..e_k (each N x d) into
// one N x kd embedding.
//
//   simple:    g = e_1 (+) e_2 (+) ... (+) e_k
//   bilinear:  g_1 = e_1,  g_t = tanh(g_{t-1}^T W_t e_t + b_t)
//   ntn:       g_1 = e_1,  g_t = U_t tanh(g_{t-1}^T W_t e_t + (g_{t-1} (+) e_t) + b_t)
//
// for t = 2..k, with W_t of shape {(t-1)d, td, d}, b_t of length td and
// U_t a td x td map. (+) is direct concatenation.

namespace fea2fea {

enum class ConcatMethod { simple, bilinear, ntn };

inline std::string_view to_string(ConcatMethod m) {
  switch (m) {
    case ConcatMethod::simple: return "simple";
    case ConcatMethod::bilinear: return "bilinear";
    case ConcatMethod::ntn: return "ntn";
  }
  return "?";
}

inline ConcatMethod parse_concat_method(std::string_view s) {
  if (s == "simple") return ConcatMethod::simple;
  if (s == "bilinear") return ConcatMethod::bilinear;
  if (s == "ntn") return ConcatMethod::ntn;
  throw UsageError("unknown concatenation method '" + std::string(s) + "' (expected simple, bilinear or ntn)");
}

/// Tape handles of the parameters of one recurrence step.
struct ConcatStep {
  Var weight;  // {(t-1)d, td, d}
  Var bias;    // {td}
  Var map;     // {td, td}; ntn only
};

namespace detail {

inline std::size_t check_embeddings(const std::vector<Var>& embeddings) {
  if (embeddings.empty()) throw ShapeError("concatenation needs at least one embedding");
  const auto& first = embeddings[0].value();
  require_rank2(first, "concat");
  for (const Var& e : embeddings) {
    if (e.value().shape != first.shape) {
      throw ShapeError("concatenation: embedding dimension mismatch " + first.shape_string() + " vs " + e.value().shape_string());
    }
  }
  return first.cols();
}

inline void check_step(const ConcatStep& s, std::size_t t, std::size_t d, bool with_map) {
  const std::vector<std::size_t> w{(t - 1) * d, t * d, d};
  if (s.weight.value().shape != w) throw ShapeError("concatenation step " + std::to_string(t) + ": weight must be " + Tensor::shape_string(w) + ", got " + s.weight.value().shape_string());
  if (s.bias.value().size() != t * d) throw ShapeError("concatenation step " + std::to_string(t) + ": bias must have length " + std::to_string(t * d));
  if (with_map && s.map.value().shape != std::vector<std::size_t>{t * d, t * d}) {
    throw ShapeError("concatenation step " + std::to_string(t) + ": map must be " + std::to_string(t * d) + "x" + std::to_string(t * d));
  }
}

}  // namespace detail

inline Var concat_simple(const std::vector<Var>& embeddings) {
  detail::check_embeddings(embeddings);
  if (embeddings.size() == 1) return embeddings[0];
  return concat(embeddings, 1);
}

/// `steps[t - 2]` holds the parameters of step t.
inline Var concat_bilinear(const std::vector<Var>& embeddings, std::span<const ConcatStep> steps) {
  const std::size_t d = detail::check_embeddings(embeddings);
  if (steps.size() + 1 < embeddings.size()) throw ShapeError("concat_bilinear: not enough step parameters");
  Var g = embeddings[0];
  for (std::size_t t = 2; t <= embeddings.size(); ++t) {
    const ConcatStep& s = steps[t - 2];
    detail::check_step(s, t, d, false);
    g = tanh(add_bias(bilinear(g, embeddings[t - 1], s.weight), s.bias));
  }
  return g;
}

inline Var concat_ntn(const std::vector<Var>& embeddings, std::span<const ConcatStep> steps) {
  const std::size_t d = detail::check_embeddings(embeddings);
  if (steps.size() + 1 < embeddings.size()) throw ShapeError("concat_ntn: not enough step parameters");
  Var g = embeddings[0];
  for (std::size_t t = 2; t <= embeddings.size(); ++t) {
    const ConcatStep& s = steps[t - 2];
    detail::check_step(s, t, d, true);
    Var pre = add(bilinear(g, embeddings[t - 1], s.weight), concat({g, embeddings[t - 1]}, 1));
    g = matmul(tanh(add_bias(pre, s.bias)), s.map);
  }
  return g;
}

inline Var concat_embeddings(ConcatMethod method, const std::vector<Var>& embeddings, std::span<const ConcatStep> steps) {
  switch (method) {
    case ConcatMethod::simple: return concat_simple(embeddings);
    case ConcatMethod::bilinear: return concat_bilinear(embeddings, steps);
    case ConcatMethod::ntn: return concat_ntn(embeddings, steps);
  }
  return concat_simple(embeddings);
}

/// Plain-array parameters of the bilinear/NTN recurrences for k embeddings
/// of dimension d. Index t - 2 holds step t.
struct NtnParams {
  std::size_t dim = 0;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::vector<Tensor> maps;

  static NtnParams zeros(std::size_t k, std::size_t d) {
    NtnParams p;
    p.dim = d;
    for (std::size_t t = 2; t <= k; ++t) {
      p.weights.emplace_back(std::vector<std::size_t>{(t - 1) * d, t * d, d}, 0.0);
      p.biases.emplace_back(std::vector<std::size_t>{t * d}, 0.0);
      p.maps.emplace_back(std::vector<std::size_t>{t * d, t * d}, 0.0);
    }
    return p;
  }

  /// Zero bilinear tensors and biases, identity maps.
  static NtnParams identity(std::size_t k, std::size_t d) {
    NtnParams p = zeros(k, d);
    for (auto& m : p.maps) {
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) = 1.0;
    }
    return p;
  }

  static NtnParams random(std::size_t k, std::size_t d, Rng& rng, double scale = 0.5) {
    NtnParams p = zeros(k, d);
    for (auto* group : {&p.weights, &p.biases, &p.maps}) {
      for (auto& t : *group) {
        for (double& v : t.data) v = rng.uniform(-scale, scale);
      }
    }
    return p;
  }

  /// Registers the arrays as tape constants.
  std::vector<ConcatStep> bind(Tape& tape) const {
    std::vector<ConcatStep> steps;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      steps.push_back({tape.constant(weights[i]), tape.constant(biases[i]), tape.constant(maps[i])});
    }
    return steps;
  }
};

/// Trainable recurrence parameters inside a ParameterStore.
struct ConcatLayer {
  ConcatMethod method = ConcatMethod::simple;
  std::size_t dim = 0;
  std::vector<std::size_t> weights, biases, maps;

  static ConcatLayer create(ParameterStore& s, const std::string& name, ConcatMethod method, std::size_t k, std::size_t d, Rng& rng) {
    ConcatLayer c;
    c.method = method;
    c.dim = d;
    if (method == ConcatMethod::simple) return c;
    for (std::size_t t = 2; t <= k; ++t) {
      const std::string step = name + ".step" + std::to_string(t);
      const std::size_t in = (t - 1) * d, out = t * d;
      c.weights.push_back(s.add(step + ".weight", glorot_uniform({in, out, d}, in * d, out, rng)));
      c.biases.push_back(s.add(step + ".bias", Tensor({out}, 0.0)));
      if (method == ConcatMethod::ntn) c.maps.push_back(s.add(step + ".map", glorot_uniform({out, out}, out, out, rng)));
    }
    return c;
  }

  Var operator()(Binding& b, const std::vector<Var>& embeddings) const {
    std::vector<ConcatStep> steps;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      ConcatStep st{b(weights[i]), b(biases[i]), {}};
      st.map = method == ConcatMethod::ntn ? b(maps[i]) : st.bias;
      steps.push_back(st);
    }
    return concat_embeddings(method, embeddings, steps);
  }
};

}  // namespace fea2fea
