#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fea2fea/autodiff.hpp"
#include "fea2fea/graph_ops.hpp"
#include "fea2fea/random.hpp"
#include "fea2fea/tensor.hpp"

namespace fea2fea {

/// Owns every trainable array of a model. Layers refer to parameters by
/// index, so a store can be copied (e.g. for best-epoch snapshots).
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value) {
    params_.push_back(Parameter{std::move(name), std::move(value), Tensor{}});
    params_.back().zero_grad();
    return params_.size() - 1;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::span<Parameter> all() noexcept { return params_; }
  std::span<const Parameter> all() const noexcept { return params_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return std::nullopt;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter> params_;
};

/// Fan-based uniform initializer: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

/// Per-forward view binding the store's parameters onto one tape. Each
/// parameter becomes a leaf the first time it is used.
class Binding {
 public:
  Binding(Tape& tape, ParameterStore& store) : tape_(tape), store_(store), vars_(store.size()) {}

  Var operator()(std::size_t index) {
    if (!vars_[index]) vars_[index] = tape_.parameter(store_[index]);
    return *vars_[index];
  }

  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  ParameterStore& store_;
  std::vector<std::optional<Var>> vars_;
};

struct Linear {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true) {
    Linear l;
    l.in_dim = in;
    l.out_dim = out;
    l.weight = store.add(name + ".weight", glorot_uniform({in, out}, in, out, rng));
    if (with_bias) l.bias = store.add(name + ".bias", Tensor({out}, 0.0));
    return l;
  }

  Var operator()(Binding& b, Var x) const {
    Var y = matmul(x, b(weight));
    return bias ? add_bias(y, b(*bias)) : y;
  }
};

/// Batch normalization with learnable affine parameters and running
/// statistics (model state, not trained).
struct BatchNorm {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t stats = 0;  // index into the model's statistics table

  Var operator()(Binding& b, Var x, std::vector<BatchNormStats>& table, bool train) const {
    return batchnorm(x, b(gamma), b(beta), table[stats], train);
  }
};

enum class ConvType { gcn, gin, sage, gat, mlp };

inline std::string_view to_string(ConvType c) {
  switch (c) {
    case ConvType::gcn: return "gcn";
    case ConvType::gin: return "gin";
    case ConvType::sage: return "sage";
    case ConvType::gat: return "gat";
    case ConvType::mlp: return "mlp";
  }
  return "?";
}

inline ConvType parse_conv_type(std::string_view s) {
  for (ConvType c : {ConvType::gcn, ConvType::gin, ConvType::sage, ConvType::gat, ConvType::mlp}) {
    if (s == to_string(c)) return c;
  }
  throw UsageError("unknown convolution type '" + std::string(s) + "' (expected gcn, gin, sage, gat or mlp)");
}

/// x' = D^-1/2 (A+I) D^-1/2 x W + b
struct GcnConv {
  Linear linear;

  static GcnConv create(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {Linear::create(s, name + ".lin", in, out, rng)};
  }
  Var operator()(Binding& b, Var x, const Graph& g) const {
    // Propagate on the narrower side.
    if (linear.out_dim < linear.in_dim) {
      Var y = gcn_propagate(matmul(x, b(linear.weight)), g);
      return linear.bias ? add_bias(y, b(*linear.bias)) : y;
    }
    return linear(b, gcn_propagate(x, g));
  }
};

/// x' = MLP((1 + eps) x + sum_{v in N(u)} x_v), MLP = Linear-ReLU-Linear.
struct GinConv {
  Linear first;
  Linear second;
  double eps = 0.0;

  static GinConv create(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng, double eps = 0.0) {
    return {Linear::create(s, name + ".mlp0", in, out, rng), Linear::create(s, name + ".mlp1", out, out, rng), eps};
  }
  Var aggregate(Var x, const Graph& g) const {
    Var self = eps == 0.0 ? x : scale(x, 1.0 + eps);
    return add(self, neighbor_sum(x, g));
  }
  Var operator()(Binding& b, Var x, const Graph& g) const { return second(b, relu(first(b, aggregate(x, g)))); }
};

/// x' = x W_self + b + mean_{v in N(u)} x_v W_neigh
struct SageConv {
  Linear self;
  Linear neigh;

  static SageConv create(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {Linear::create(s, name + ".self", in, out, rng), Linear::create(s, name + ".neigh", in, out, rng, false)};
  }
  Var operator()(Binding& b, Var x, const Graph& g) const { return add(self(b, x), neigh(b, neighbor_mean(x, g))); }
};

/// Single-head graph attention over N(u) and u itself.
struct GatConv {
  Linear linear;  // no bias
  std::size_t attention = 0;
  std::size_t bias = 0;
  double slope = 0.2;

  static GatConv create(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    GatConv c;
    c.linear = Linear::create(s, name + ".lin", in, out, rng, false);
    c.attention = s.add(name + ".att", glorot_uniform({2 * out}, 2 * out, 1, rng));
    c.bias = s.add(name + ".bias", Tensor({out}, 0.0));
    return c;
  }
  Var operator()(Binding& b, Var x, const Graph& g) const {
    Var z = linear(b, x);
    return add_bias(gat_aggregate(z, b(attention), g, slope), b(bias));
  }
};

/// One message-passing layer of any supported kind.
struct Conv {
  ConvType type = ConvType::gin;
  GcnConv gcn;
  GinConv gin;
  SageConv sage;
  GatConv gat;
  Linear mlp;

  static Conv create(ConvType type, ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    Conv c;
    c.type = type;
    switch (type) {
      case ConvType::gcn: c.gcn = GcnConv::create(s, name, in, out, rng); break;
      case ConvType::gin: c.gin = GinConv::create(s, name, in, out, rng); break;
      case ConvType::sage: c.sage = SageConv::create(s, name, in, out, rng); break;
      case ConvType::gat: c.gat = GatConv::create(s, name, in, out, rng); break;
      case ConvType::mlp: c.mlp = Linear::create(s, name + ".lin", in, out, rng); break;
    }
    return c;
  }

  Var operator()(Binding& b, Var x, const Graph& g) const {
    switch (type) {
      case ConvType::gcn: return gcn(b, x, g);
      case ConvType::gin: return gin(b, x, g);
      case ConvType::sage: return sage(b, x, g);
      case ConvType::gat: return gat(b, x, g);
      case ConvType::mlp: return mlp(b, x);
    }
    return x;
  }
};

}  // namespace fea2fea
