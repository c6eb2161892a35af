#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fea2fea/error.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/random.hpp"
#include "fea2fea/tensor.hpp"

namespace fea2fea {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const std::vector<std::size_t>& shape() const { return value().shape; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of a forward computation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it. `backward` walks the record once in reverse, which visits each node
/// after all of its consumers. Leaves created with `parameter()` push their
/// gradient into the bound Parameter when the walk finishes.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), {}, false, nullptr); }
  Var variable(Tensor value) { return push(std::move(value), {}, true, nullptr); }
  Var parameter(Parameter& p) {
    Var v = push(p.value, {}, true, nullptr);
    nodes_[v.id()].param = &p;
    return v;
  }

  /// Records a computed value. `fn` is kept only if some input requires a
  /// gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& in : inputs) {
      ids.push_back(in.id());
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs, needs ? std::move(fn) : nullptr);
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    std::vector<std::size_t> ids;
    for (const Var& in : inputs) {
      ids.push_back(in.id());
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs, needs ? std::move(fn) : nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of node `id`, zero-initialized on first use. Returns an
  /// empty span for nodes that do not require a gradient.
  std::span<double> grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad.data;
  }

  /// Reverse sweep from a single-element root, seeded with d(root) = 1.
  void backward(Var root) {
    if (root.value().size() != 1) throw ShapeError("backward root must be a scalar, got " + root.value().shape_string());
    for (auto& n : nodes_) n.grad.data.clear();
    if (!nodes_[root.id()].requires_grad) return;
    grad_buffer(root.id())[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.data.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        if (n.param->grad.data.size() != n.value.size()) n.param->zero_grad();
        for (std::size_t k = 0; k < n.grad.data.size(); ++k) n.param->grad.data[k] += n.grad.data[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(inputs), std::move(fn), nullptr});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got shape " + t.shape_string());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// c += a (m x k) * b (k x n). Rows of c are produced four at a time so
// each row of b is loaded once per block.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c (m x k) += g (m x n) * b^T, b is (k x n)
inline void gemm_nt_acc(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_acc(g, bt.data(), c, m, n, k);
}

// c (k x n) += a^T * g, a is (m x k), g is (m x n)
inline void gemm_tn_acc(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

inline Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_rank2(A, "matmul");
  detail::require_rank2(B, "matmul");
  if (A.cols() != B.rows()) throw ShapeError("matmul: shape mismatch " + A.shape_string() + " vs " + B.shape_string());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n}, 0.0);
  detail::gemm_acc(A.data.data(), B.data.data(), out.data.data(), m, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data.data();
    if (auto ga = t.grad_buffer(a.id()); !ga.empty()) detail::gemm_nt_acc(g, t.value(b.id()).data.data(), ga.data(), m, k, n);
    if (auto gb = t.grad_buffer(b.id()); !gb.empty()) detail::gemm_tn_acc(t.value(a.id()).data.data(), g, gb.data(), m, k, n);
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    for (Var in : {a, b}) {
      if (auto gi = t.grad_buffer(in.id()); !gi.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    }
  });
}

/// Adds a bias row (shape {n} or {1, n}) to every row of an m x n matrix.
inline Var add_bias(Var x, Var bias) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "add_bias");
  const std::size_t m = X.rows(), n = X.cols();
  if (bias.value().size() != n) throw ShapeError("add_bias: shape mismatch " + X.shape_string() + " vs " + bias.value().shape_string());
  Tensor out = X;
  const auto& b = bias.value().data;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += b[j];
  }
  return x.tape().record(std::move(out), {x, bias}, [x, bias, m, n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    if (auto gx = t.grad_buffer(x.id()); !gx.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (auto gb = t.grad_buffer(bias.id()); !gb.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    if (auto ga = t.grad_buffer(a.id()); !ga.empty()) {
      const auto& bv = t.value(b.id()).data;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (auto gb = t.grad_buffer(b.id()); !gb.empty()) {
      const auto& av = t.value(a.id()).data;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var x, double s) {
  Tensor out = x.value();
  for (double& v : out.data) v *= s;
  return x.tape().record(std::move(out), {x}, [x, s](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    auto gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

namespace detail {

// Pointwise op with derivative expressed through input x and output y.
template <typename F, typename D>
Var pointwise(Var x, F f, D dfdx) {
  Tensor out = x.value();
  for (double& v : out.data) v = f(v);
  return x.tape().record(std::move(out), {x}, [x, dfdx](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    const auto& xv = t.value(x.id()).data;
    const auto& yv = t.value(self).data;
    auto gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace detail

inline Var relu(Var x) {
  return detail::pointwise(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Var x) {
  return detail::pointwise(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var leaky_relu(Var x, double slope) {
  return detail::pointwise(x, [slope](double v) { return v > 0.0 ? v : slope * v; },
                           [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

// ---------------------------------------------------------------------------
// Shape manipulation and reductions

/// Concatenates rank-2 tensors along axis 0 (stack rows) or 1 (join columns).
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const Var& p : parts) detail::require_rank2(p.value(), "concat");
  const std::size_t other = axis == 0 ? parts[0].value().cols() : parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    const std::size_t o = axis == 0 ? p.value().cols() : p.value().rows();
    if (o != other) throw ShapeError("concat: shape mismatch " + parts[0].value().shape_string() + " vs " + p.value().shape_string());
    total += axis == 0 ? p.value().rows() : p.value().cols();
  }
  Tensor out(axis == 0 ? std::vector<std::size_t>{total, other} : std::vector<std::size_t>{other, total});
  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    starts.push_back(pos);
    if (axis == 0) {
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(pos * other));
      pos += v.rows();
    } else {
      const std::size_t w = v.cols();
      for (std::size_t r = 0; r < other; ++r) {
        std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(r * w), w, out.data.begin() + static_cast<std::ptrdiff_t>(r * total + pos));
      }
      pos += w;
    }
  }
  Tape& tape = parts[0].tape();
  return tape.record(std::move(out), parts, [parts, starts, axis, other, total](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto gp = t.grad_buffer(parts[k].id());
      if (gp.empty()) continue;
      const Tensor& v = t.value(parts[k].id());
      if (axis == 0) {
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[starts[k] * other + i];
      } else {
        const std::size_t w = v.cols();
        for (std::size_t r = 0; r < other; ++r) {
          for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * total + starts[k] + c];
        }
      }
    }
  });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    for (double& gi : t.grad_buffer(x.id())) gi += g;
  });
}

inline Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

/// Row-wise (axis 1 -> m x 1) or column-wise (axis 0 -> 1 x n) sum.
inline Var sum(Var x, std::size_t axis) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "sum");
  if (axis > 1) throw ShapeError("sum: axis must be 0 or 1");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor out(axis == 0 ? std::vector<std::size_t>{1, n} : std::vector<std::size_t>{m, 1}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data[axis == 0 ? j : i] += X.data[i * n + j];
  }
  return x.tape().record(std::move(out), {x}, [x, axis, m, n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    auto gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[axis == 0 ? j : i];
    }
  });
}

inline Var mean(Var x, std::size_t axis) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "mean");
  return scale(sum(x, axis), 1.0 / static_cast<double>(axis == 0 ? X.rows() : X.cols()));
}

/// Numerically stable log-softmax along `axis` of a matrix.
inline Var log_softmax(Var x, std::size_t axis = 1) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "log_softmax");
  if (axis > 1) throw ShapeError("log_softmax: axis must be 0 or 1");
  const std::size_t m = X.rows(), n = X.cols();
  // Lines are rows for axis 1 and columns for axis 0.
  const std::size_t lines = axis == 1 ? m : n, len = axis == 1 ? n : m;
  const std::size_t line_stride = axis == 1 ? n : 1, elem_stride = axis == 1 ? 1 : n;
  Tensor out(X.shape);
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_stride;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < len; ++e) hi = std::max(hi, X.data[base + e * elem_stride]);
    double s = 0.0;
    for (std::size_t e = 0; e < len; ++e) s += std::exp(X.data[base + e * elem_stride] - hi);
    const double lse = hi + std::log(s);
    for (std::size_t e = 0; e < len; ++e) out.data[base + e * elem_stride] = X.data[base + e * elem_stride] - lse;
  }
  return x.tape().record(std::move(out), {x}, [x, lines, len, line_stride, elem_stride](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    const auto& y = t.value(self).data;
    auto gx = t.grad_buffer(x.id());
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t base = l * line_stride;
      double gs = 0.0;
      for (std::size_t e = 0; e < len; ++e) gs += g[base + e * elem_stride];
      for (std::size_t e = 0; e < len; ++e) {
        const std::size_t k = base + e * elem_stride;
        gx[k] += g[k] - std::exp(y[k]) * gs;
      }
    }
  });
}

/// Selects rows `index[0], index[1], ...` of a matrix.
inline Var gather_rows(Var x, std::vector<std::size_t> index) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "gather_rows");
  const std::size_t n = X.cols();
  Tensor out({index.size(), n});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= X.rows()) throw ShapeError("gather_rows: row " + std::to_string(index[r]) + " out of range for " + X.shape_string());
    std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(index[r] * n), n, out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  return x.tape().record(std::move(out), {x}, [x, index = std::move(index), n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    auto gx = t.grad_buffer(x.id());
    for (std::size_t r = 0; r < index.size(); ++r) {
      for (std::size_t c = 0; c < n; ++c) gx[index[r] * n + c] += g[r * n + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Regularization and normalization

/// Inverted dropout. Identity when not training or p == 0.
inline Var dropout(Var x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout probability must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  return x.tape().record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    auto gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-column batch normalization of an m x n matrix. Training mode uses
/// batch statistics (biased variance) and updates the running estimates
/// (unbiased variance); evaluation mode uses the running estimates only.
inline Var batchnorm(Var x, Var gamma, Var beta, BatchNormStats& stats, bool train) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "batchnorm");
  const std::size_t m = X.rows(), n = X.cols();
  if (gamma.value().size() != n || beta.value().size() != n) throw ShapeError("batchnorm: affine parameters do not match " + X.shape_string());
  if (stats.running_mean.size() != n) {
    stats.running_mean.assign(n, 0.0);
    stats.running_var.assign(n, 1.0);
  }
  const auto& gm = gamma.value().data;
  const auto& bt = beta.value().data;
  std::vector<double> mu(n, 0.0), inv_std(n);
  if (train) {
    if (m < 2) throw ShapeError("batchnorm: training needs at least two rows");
    std::vector<double> var(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) mu[j] += X.data[i * n + j];
    for (double& v : mu) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = X.data[i * n + j] - mu[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < n; ++j) {
      const double biased = var[j] / static_cast<double>(m);
      inv_std[j] = 1.0 / std::sqrt(biased + stats.eps);
      const double unbiased = var[j] / static_cast<double>(m - 1);
      stats.running_mean[j] = (1.0 - stats.momentum) * stats.running_mean[j] + stats.momentum * mu[j];
      stats.running_var[j] = (1.0 - stats.momentum) * stats.running_var[j] + stats.momentum * unbiased;
    }
  } else {
    mu = stats.running_mean;
    for (std::size_t j = 0; j < n; ++j) inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + stats.eps);
  }
  Tensor xhat(X.shape), out(X.shape);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      xhat.data[k] = (X.data[k] - mu[j]) * inv_std[j];
      out.data[k] = xhat.data[k] * gm[j] + bt[j];
    }
  }
  return x.tape().record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat = std::move(xhat), inv_std, train, m, n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self).data;
    const auto& gm = t.value(gamma.id()).data;
    if (auto gg = t.grad_buffer(gamma.id()); !gg.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat.data[i * n + j];
    }
    if (auto gb = t.grad_buffer(beta.id()); !gb.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
    auto gx = t.grad_buffer(x.id());
    if (gx.empty()) return;
    if (!train) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * gm[j] * inv_std[j];
      return;
    }
    std::vector<double> sum_d(n, 0.0), sum_dx(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = g[i * n + j] * gm[j];
        sum_d[j] += d;
        sum_dx[j] += d * xhat.data[i * n + j];
      }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = i * n + j;
        const double d = g[k] * gm[j];
        gx[k] += inv_std[j] * (d - inv_m * sum_d[j] - xhat.data[k] * inv_m * sum_dx[j]);
      }
  });
}

// ---------------------------------------------------------------------------
// Loss

/// Mean negative log-likelihood over the selected rows (all rows when
/// `rows` is empty). `log_probs` is N x C.
inline Var nll_loss(Var log_probs, std::span<const ClassId> targets, std::span<const std::size_t> rows = {}) {
  const Tensor& L = log_probs.value();
  detail::require_rank2(L, "nll_loss");
  const std::size_t c = L.cols();
  std::vector<std::size_t> sel(rows.begin(), rows.end());
  if (sel.empty()) {
    if (targets.size() != L.rows()) throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for " + L.shape_string());
    sel.resize(L.rows());
    for (std::size_t i = 0; i < sel.size(); ++i) sel[i] = i;
  }
  std::vector<std::size_t> cls(sel.size());
  double total = 0.0;
  for (std::size_t k = 0; k < sel.size(); ++k) {
    if (sel[k] >= L.rows() || sel[k] >= targets.size()) throw ShapeError("nll_loss: row index out of range");
    const ClassId y = targets[sel[k]];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ShapeError("nll_loss: target " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    cls[k] = static_cast<std::size_t>(y);
    total -= L.data[sel[k] * c + cls[k]];
  }
  const double inv = 1.0 / static_cast<double>(sel.size());
  return log_probs.tape().record(Tensor::scalar(total * inv), {log_probs}, [log_probs, sel = std::move(sel), cls = std::move(cls), c, inv](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    auto gl = t.grad_buffer(log_probs.id());
    for (std::size_t k = 0; k < sel.size(); ++k) gl[sel[k] * c + cls[k]] -= g * inv;
  });
}

}  // namespace fea2fea
