#pragma once

#include <cmath>
#include <memory>
#include <cstdint>
#include <span>
#include <vector>

#include "fea2fea/autodiff.hpp"
#include "fea2fea/graph.hpp"

// Differentiable message-passing primitives. All take node features as an
// |V| x F matrix whose row order matches the graph's node ids.

namespace fea2fea {

namespace detail {

inline void require_rows(const Tensor& x, const Graph& g, const char* op) {
  require_rank2(x, op);
  if (x.rows() != g.num_nodes()) {
    throw ShapeError(std::string(op) + ": " + x.shape_string() + " rows do not match " + std::to_string(g.num_nodes()) + " nodes");
  }
}

// out[u] = sum_{v in N(u)} w(u, v) * x[v]; with w symmetric the adjoint
// has the same form.
template <typename Weight>
void propagate(const Graph& g, const double* x, double* out, std::size_t f, Weight w) {
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    double* orow = out + u * f;
    for (NodeId v : g.neighbors(u)) {
      const double wv = w(u, v);
      const double* xrow = x + static_cast<std::size_t>(v) * f;
      for (std::size_t j = 0; j < f; ++j) orow[j] += wv * xrow[j];
    }
  }
}

}  // namespace detail

/// Sum of neighbor rows.
inline Var neighbor_sum(Var x, const Graph& g) {
  detail::require_rows(x.value(), g, "neighbor_sum");
  const std::size_t f = x.value().cols();
  Tensor out(x.value().shape, 0.0);
  detail::propagate(g, x.value().data.data(), out.data.data(), f, [](NodeId, NodeId) { return 1.0; });
  return x.tape().record(std::move(out), {x}, [x, &g, f](Tape& t, std::size_t self) {
    detail::propagate(g, t.grad(self).data.data(), t.grad_buffer(x.id()).data(), f, [](NodeId, NodeId) { return 1.0; });
  });
}

/// Mean of neighbor rows; nodes without neighbors get a zero row.
inline Var neighbor_mean(Var x, const Graph& g) {
  detail::require_rows(x.value(), g, "neighbor_mean");
  const std::size_t f = x.value().cols();
  Tensor out(x.value().shape, 0.0);
  auto w = [&g](NodeId u, NodeId) { return 1.0 / static_cast<double>(g.degree(u)); };
  detail::propagate(g, x.value().data.data(), out.data.data(), f, w);
  return x.tape().record(std::move(out), {x}, [x, &g, f](Tape& t, std::size_t self) {
    // Adjoint of mean aggregation: gx[v] += g[u] / deg(u) for v in N(u).
    const double* gout = t.grad(self).data.data();
    double* gx = t.grad_buffer(x.id()).data();
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      if (g.degree(u) == 0) continue;
      const double w = 1.0 / static_cast<double>(g.degree(u));
      for (NodeId v : g.neighbors(u)) {
        for (std::size_t j = 0; j < f; ++j) gx[static_cast<std::size_t>(v) * f + j] += w * gout[u * f + j];
      }
    }
  });
}

/// Symmetric-normalized propagation with self-loops:
/// D^-1/2 (A + I) D^-1/2 x, where D counts the self-loop.
inline Var gcn_propagate(Var x, const Graph& g) {
  detail::require_rows(x.value(), g, "gcn_propagate");
  const std::size_t f = x.value().cols(), n = g.num_nodes();
  auto inv_sqrt = std::make_shared<std::vector<double>>(n);
  for (NodeId u = 0; u < n; ++u) (*inv_sqrt)[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1));
  auto apply = [&g, inv_sqrt, f, n](const double* in, double* out) {
    const auto& s = *inv_sqrt;
    for (NodeId u = 0; u < n; ++u) {
      const double self = s[u] * s[u];
      for (std::size_t j = 0; j < f; ++j) out[u * f + j] += self * in[u * f + j];
    }
    detail::propagate(g, in, out, f, [&s](NodeId u, NodeId v) { return s[u] * s[v]; });
  };
  Tensor out(x.value().shape, 0.0);
  apply(x.value().data.data(), out.data.data());
  return x.tape().record(std::move(out), {x}, [x, apply](Tape& t, std::size_t self) {
    apply(t.grad(self).data.data(), t.grad_buffer(x.id()).data());
  });
}

/// Attention coefficients of single-head graph attention. For every node
/// u, returns alpha(u, v) over the list [u, N(u)...] (self first), where
/// alpha = softmax_v(leaky_relu(a_self . z_u + a_neigh . z_v)) and
/// `attention` = [a_self ; a_neigh] has length 2F.
inline std::vector<std::vector<double>> gat_coefficients(const Tensor& z, std::span<const double> attention, const Graph& g, double slope) {
  const std::size_t f = z.cols();
  std::vector<double> s_self(g.num_nodes()), s_neigh(g.num_nodes());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      a += attention[j] * z(u, j);
      b += attention[f + j] * z(u, j);
    }
    s_self[u] = a;
    s_neigh[u] = b;
  }
  std::vector<std::vector<double>> alpha(g.num_nodes());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    auto nb = g.neighbors(u);
    auto& row = alpha[u];
    row.resize(nb.size() + 1);
    auto score = [&](NodeId v) {
      const double e = s_self[u] + s_neigh[v];
      return e > 0.0 ? e : slope * e;
    };
    row[0] = score(u);
    for (std::size_t k = 0; k < nb.size(); ++k) row[k + 1] = score(nb[k]);
    double hi = row[0];
    for (double e : row) hi = std::max(hi, e);
    double total = 0.0;
    for (double& e : row) total += (e = std::exp(e - hi));
    for (double& e : row) e /= total;
  }
  return alpha;
}

/// Attention-weighted aggregation out[u] = sum_v alpha(u, v) z[v] over
/// v in {u} + N(u). Differentiable in both z and the attention vector.
inline Var gat_aggregate(Var z, Var attention, const Graph& g, double slope = 0.2) {
  const Tensor& Z = z.value();
  detail::require_rows(Z, g, "gat_aggregate");
  const std::size_t f = Z.cols();
  if (attention.value().size() != 2 * f) throw ShapeError("gat_aggregate: attention vector must have length 2F");
  auto alpha = std::make_shared<std::vector<std::vector<double>>>(gat_coefficients(Z, attention.value().data, g, slope));
  Tensor out(Z.shape, 0.0);
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    const auto& a = (*alpha)[u];
    auto nb = g.neighbors(u);
    for (std::size_t k = 0; k <= nb.size(); ++k) {
      const NodeId v = k == 0 ? u : nb[k - 1];
      for (std::size_t j = 0; j < f; ++j) out(u, j) += a[k] * Z(v, j);
    }
  }
  return z.tape().record(std::move(out), {z, attention}, [z, attention, &g, f, slope, alpha](Tape& t, std::size_t self) {
    const Tensor& Zv = t.value(z.id());
    const auto& att = t.value(attention.id()).data;
    const auto& gout = t.grad(self);
    auto gz = t.grad_buffer(z.id());
    auto ga = t.grad_buffer(attention.id());
    std::vector<double> gs_self(g.num_nodes(), 0.0), gs_neigh(g.num_nodes(), 0.0);
    std::vector<double> dalpha;
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      const auto& a = (*alpha)[u];
      auto nb = g.neighbors(u);
      dalpha.assign(a.size(), 0.0);
      double s_self = 0.0;
      for (std::size_t j = 0; j < f; ++j) s_self += att[j] * Zv(u, j);
      for (std::size_t k = 0; k < a.size(); ++k) {
        const NodeId v = k == 0 ? u : nb[k - 1];
        double d = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
          d += gout(u, j) * Zv(v, j);
          if (!gz.empty()) gz[static_cast<std::size_t>(v) * f + j] += a[k] * gout(u, j);
        }
        dalpha[k] = d;
      }
      double weighted = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) weighted += a[k] * dalpha[k];
      for (std::size_t k = 0; k < a.size(); ++k) {
        const NodeId v = k == 0 ? u : nb[k - 1];
        double s_neigh = 0.0;
        for (std::size_t j = 0; j < f; ++j) s_neigh += att[f + j] * Zv(v, j);
        const double pre = s_self + s_neigh;
        const double de = a[k] * (dalpha[k] - weighted) * (pre > 0.0 ? 1.0 : slope);
        gs_self[u] += de;
        gs_neigh[v] += de;
      }
    }
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      for (std::size_t j = 0; j < f; ++j) {
        if (!gz.empty()) gz[u * f + j] += gs_self[u] * att[j] + gs_neigh[u] * att[f + j];
        if (!ga.empty()) {
          ga[j] += gs_self[u] * Zv(u, j);
          ga[f + j] += gs_neigh[u] * Zv(u, j);
        }
      }
    }
  });
}

/// Pools rows into `num_segments` groups: segment_of[r] names the group of
/// row r. Empty groups yield zero rows.
inline Var segment_sum(Var x, std::span<const std::uint32_t> segment_of, std::size_t num_segments) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "segment_sum");
  if (segment_of.size() != X.rows()) throw ShapeError("segment_sum: segment ids do not match rows of " + X.shape_string());
  const std::size_t f = X.cols();
  Tensor out({num_segments, f}, 0.0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t j = 0; j < f; ++j) out(segment_of[r], j) += X(r, j);
  }
  std::vector<std::uint32_t> seg(segment_of.begin(), segment_of.end());
  return x.tape().record(std::move(out), {x}, [x, seg = std::move(seg), f](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto gx = t.grad_buffer(x.id());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      for (std::size_t j = 0; j < f; ++j) gx[r * f + j] += g(seg[r], j);
    }
  });
}

inline Var segment_mean(Var x, std::span<const std::uint32_t> segment_of, std::size_t num_segments) {
  const Tensor& X = x.value();
  detail::require_rank2(X, "segment_mean");
  if (segment_of.size() != X.rows()) throw ShapeError("segment_mean: segment ids do not match rows of " + X.shape_string());
  const std::size_t f = X.cols();
  std::vector<double> inv_count(num_segments, 0.0);
  for (auto s : segment_of) inv_count[s] += 1.0;
  for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
  Tensor out({num_segments, f}, 0.0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (std::size_t j = 0; j < f; ++j) out(segment_of[r], j) += inv_count[segment_of[r]] * X(r, j);
  }
  std::vector<std::uint32_t> seg(segment_of.begin(), segment_of.end());
  return x.tape().record(std::move(out), {x}, [x, seg = std::move(seg), inv_count = std::move(inv_count), f](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto gx = t.grad_buffer(x.id());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      for (std::size_t j = 0; j < f; ++j) gx[r * f + j] += inv_count[seg[r]] * g(seg[r], j);
    }
  });
}

/// Row-wise bilinear form: out[n, r] = sum_{p,q} left[n, p] W[p, r, q] right[n, q]
/// with W of shape {P, R, Q}.
inline Var bilinear(Var left, Var right, Var weight) {
  const Tensor& L = left.value();
  const Tensor& Rt = right.value();
  const Tensor& W = weight.value();
  detail::require_rank2(L, "bilinear");
  detail::require_rank2(Rt, "bilinear");
  if (W.rank() != 3 || W.shape[0] != L.cols() || W.shape[2] != Rt.cols() || L.rows() != Rt.rows()) {
    throw ShapeError("bilinear: shape mismatch " + L.shape_string() + ", " + W.shape_string() + ", " + Rt.shape_string());
  }
  const std::size_t n = L.rows(), P = W.shape[0], R = W.shape[1], Q = W.shape[2];
  Tensor out({n, R}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* l = L.data.data() + i * P;
    const double* rr = Rt.data.data() + i * Q;
    double* o = out.data.data() + i * R;
    for (std::size_t p = 0; p < P; ++p) {
      if (l[p] == 0.0) continue;
      const double* wp = W.data.data() + p * R * Q;
      for (std::size_t r = 0; r < R; ++r) {
        const double* w = wp + r * Q;
        double s = 0.0;
        for (std::size_t q = 0; q < Q; ++q) s += w[q] * rr[q];
        o[r] += l[p] * s;
      }
    }
  }
  return left.tape().record(std::move(out), {left, right, weight}, [left, right, weight, n, P, R, Q](Tape& t, std::size_t self) {
    const double* g = t.grad(self).data.data();
    const double* L = t.value(left.id()).data.data();
    const double* Rv = t.value(right.id()).data.data();
    const double* W = t.value(weight.id()).data.data();
    auto gl = t.grad_buffer(left.id());
    auto gr = t.grad_buffer(right.id());
    auto gw = t.grad_buffer(weight.id());
    for (std::size_t i = 0; i < n; ++i) {
      const double* l = L + i * P;
      const double* rr = Rv + i * Q;
      const double* gi = g + i * R;
      for (std::size_t p = 0; p < P; ++p) {
        const double* wp = W + p * R * Q;
        double dl = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
          const double gr_l = gi[r] * l[p];
          const double* w = wp + r * Q;
          if (!gl.empty()) {
            double s = 0.0;
            for (std::size_t q = 0; q < Q; ++q) s += w[q] * rr[q];
            dl += gi[r] * s;
          }
          if (gr_l == 0.0) continue;
          if (!gr.empty()) {
            for (std::size_t q = 0; q < Q; ++q) gr[i * Q + q] += gr_l * w[q];
          }
          if (!gw.empty()) {
            double* dw = gw.data() + (p * R + r) * Q;
            for (std::size_t q = 0; q < Q; ++q) dw[q] += gr_l * rr[q];
          }
        }
        if (!gl.empty()) gl[i * P + p] += dl;
      }
    }
  });
}

}  // namespace fea2fea
