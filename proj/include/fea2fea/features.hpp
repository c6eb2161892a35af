#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fea2fea/error.hpp"
#include "fea2fea/graph.hpp"

namespace fea2fea {

/// Canonical structural feature columns.
enum class Feature : std::size_t { cons = 0, deg = 1, clu = 2, pr = 3, avglen = 4 };

inline constexpr std::size_t kNumFeatures = 5;
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {"cons", "deg", "clu", "pr", "avglen"};
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureLabels = {"Cons", "Deg", "Clu", "PR", "AvgLen"};

inline std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (name == kFeatureNames[i] || name == kFeatureLabels[i]) return i;
  }
  return std::nullopt;
}

inline std::vector<double> constant_feature(const Graph& g, double c = 1.0) {
  if (!(c > 0.0)) throw DataError("constant feature value must be positive");
  return std::vector<double>(g.num_nodes(), c);
}

inline std::vector<double> degree(const Graph& g) {
  std::vector<double> out(g.num_nodes());
  for (NodeId u = 0; u < g.num_nodes(); ++u) out[u] = static_cast<double>(g.degree(u));
  return out;
}

/// Local clustering coefficient: edges present among N(u) over k(k-1)/2.
/// Nodes with fewer than two neighbors get 0.
inline std::vector<double> clustering_coefficient(const Graph& g) {
  std::vector<double> out(g.num_nodes(), 0.0);
  std::vector<std::uint8_t> mark(g.num_nodes(), 0);
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    const auto nb = g.neighbors(u);
    const std::size_t k = nb.size();
    if (k < 2) continue;
    for (NodeId v : nb) mark[v] = 1;
    std::size_t links = 0;  // each edge among neighbors is seen twice
    for (NodeId v : nb) {
      for (NodeId w : g.neighbors(v)) links += mark[w];
    }
    for (NodeId v : nb) mark[v] = 0;
    out[u] = static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return out;
}

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-8;
  std::size_t max_iter = 200;
};

/// Power iteration for PR(u) = (1-q)/|V| + q * sum_{v in N(u)} PR(v)/deg(v),
/// starting from the uniform vector. Mass sitting on isolated nodes is
/// spread uniformly each step, so the result always sums to one.
inline std::vector<double> pagerank(const Graph& g, const PageRankOptions& opt = {}) {
  const std::size_t n = g.num_nodes();
  if (opt.damping < 0.0 || opt.damping >= 1.0) throw DataError("pagerank damping must lie in [0, 1)");
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> rank(n, inv_n), next(n), share(n);
  double residual = 0.0;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    double dangling = 0.0;
    for (NodeId v = 0; v < n; ++v) {
      const auto d = g.degree(v);
      if (d == 0) {
        dangling += rank[v];
        share[v] = 0.0;
      } else {
        share[v] = rank[v] / static_cast<double>(d);
      }
    }
    const double base = (1.0 - opt.damping) * inv_n + opt.damping * dangling * inv_n;
    residual = 0.0;
    for (NodeId u = 0; u < n; ++u) {
      double sum = 0.0;
      for (NodeId v : g.neighbors(u)) sum += share[v];
      next[u] = base + opt.damping * sum;
      residual = std::max(residual, std::abs(next[u] - rank[u]));
    }
    rank.swap(next);
    if (residual < opt.tol) return rank;
  }
  throw ConvergenceError("pagerank did not converge in " + std::to_string(opt.max_iter) + " iterations", residual);
}

/// Mean shortest-path distance from u to every node reachable from u
/// (per-source BFS). Nodes that reach nothing get 0.
inline std::vector<double> average_path_length(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> out(n, 0.0);
  std::vector<std::uint32_t> dist(n);
  std::vector<NodeId> queue(n);
  constexpr auto kUnseen = ~std::uint32_t{0};
  for (NodeId s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), kUnseen);
    dist[s] = 0;
    std::size_t head = 0, tail = 0;
    queue[tail++] = s;
    std::uint64_t total = 0;
    std::size_t reached = 0;
    while (head < tail) {
      const NodeId u = queue[head++];
      for (NodeId v : g.neighbors(u)) {
        if (dist[v] != kUnseen) continue;
        dist[v] = dist[u] + 1;
        total += dist[v];
        ++reached;
        queue[tail++] = v;
      }
    }
    if (reached) out[s] = static_cast<double>(total) / static_cast<double>(reached);
  }
  return out;
}

/// |V| x 5 structural feature table in canonical column order.
struct NodeFeatureMatrix {
  Matrix values;

  std::size_t num_nodes() const noexcept { return values.rows; }
  std::vector<double> column(Feature f) const { return values.column(static_cast<std::size_t>(f)); }
  std::vector<double> column(std::size_t c) const { return values.column(c); }
};

struct FeatureOptions {
  double constant = 1.0;
  PageRankOptions pagerank;
};

inline NodeFeatureMatrix build_feature_matrix(const Graph& g, const FeatureOptions& opt = {}) {
  const std::array<std::vector<double>, kNumFeatures> cols = {
      constant_feature(g, opt.constant), degree(g), clustering_coefficient(g), pagerank(g, opt.pagerank),
      average_path_length(g)};
  NodeFeatureMatrix m{Matrix(g.num_nodes(), kNumFeatures)};
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    for (std::size_t r = 0; r < g.num_nodes(); ++r) m.values(r, c) = cols[c][r];
  }
  return m;
}

/// Features of each graph computed independently, stacked in graph order.
inline NodeFeatureMatrix build_feature_matrix(std::span<const Graph> graphs, const FeatureOptions& opt = {}) {
  std::size_t total = 0;
  for (const auto& g : graphs) total += g.num_nodes();
  NodeFeatureMatrix out{Matrix(total, kNumFeatures)};
  std::size_t row = 0;
  for (const auto& g : graphs) {
    const auto part = build_feature_matrix(g, opt);
    std::copy(part.values.values.begin(), part.values.values.end(), out.values.values.begin() + static_cast<std::ptrdiff_t>(row * kNumFeatures));
    row += g.num_nodes();
  }
  return out;
}

inline std::vector<std::string> feature_header() { return {kFeatureNames.begin(), kFeatureNames.end()}; }

}  // namespace fea2fea
