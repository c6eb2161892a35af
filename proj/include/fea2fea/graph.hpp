#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fea2fea/error.hpp"

namespace fea2fea {

using NodeId = std::uint32_t;
using ClassId = std::int32_t;

/// Dense row-major real matrix. Used for node feature tables that live
/// outside the autodiff tape (initial features, structural features).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Immutable simple undirected graph in compressed sparse row form.
///
/// Every undirected edge {u, v} is stored twice (u -> v and v -> u).
/// Neighbor lists are sorted ascending, without self-loops or duplicates.
class Graph {
 public:
  Graph() : offsets_{0} {}

  /// Builds a canonical graph from an arbitrary edge list. Self-loops and
  /// repeated pairs (in either orientation) are dropped.
  static Graph from_edges(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> edges) {
    std::vector<std::pair<NodeId, NodeId>> arcs;
    arcs.reserve(edges.size() * 2);
    for (auto [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes) {
        throw DataError("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") references a node outside [0, " +
                        std::to_string(num_nodes) + ")");
      }
      if (u == v) continue;
      arcs.emplace_back(u, v);
      arcs.emplace_back(v, u);
    }
    std::sort(arcs.begin(), arcs.end());
    arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

    Graph g;
    g.num_nodes_ = num_nodes;
    g.offsets_.assign(num_nodes + 1, 0);
    g.neighbors_.reserve(arcs.size());
    for (auto [u, v] : arcs) {
      ++g.offsets_[u + 1];
      g.neighbors_.push_back(v);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];
    g.num_edges_ = arcs.size() / 2;
    return g;
  }

  static Graph from_edges(std::size_t num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    return from_edges(num_nodes, std::span<const std::pair<NodeId, NodeId>>(edges));
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return num_edges_; }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {neighbors_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
  }
  std::size_t degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }

  bool has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  std::span<const std::size_t> offsets() const noexcept { return offsets_; }
  std::span<const NodeId> adjacency() const noexcept { return neighbors_; }

  /// Each undirected edge once, as (u, v) with u < v, in ascending order.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(num_edges_);
    for (NodeId u = 0; u < num_nodes_; ++u) {
      for (NodeId v : neighbors(u)) {
        if (u < v) out.emplace_back(u, v);
      }
    }
    return out;
  }

  /// Checks the structural invariants: symmetry, sorted unique lists, no
  /// self-loops, offsets consistent with the edge count.
  bool is_canonical() const {
    if (offsets_.size() != num_nodes_ + 1 || offsets_.back() != 2 * num_edges_) return false;
    for (NodeId u = 0; u < num_nodes_; ++u) {
      auto nb = neighbors(u);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        if (nb[i] == u || nb[i] >= num_nodes_) return false;
        if (i > 0 && nb[i - 1] >= nb[i]) return false;
        if (!has_edge(nb[i], u)) return false;
      }
    }
    return true;
  }

  /// Relabels nodes: node u of this graph becomes node perm[u].
  Graph permuted(std::span<const NodeId> perm) const {
    auto edges = edge_list();
    for (auto& [u, v] : edges) {
      u = perm[u];
      v = perm[v];
    }
    return from_edges(num_nodes_, edges);
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::size_t num_nodes_ = 0;
  std::size_t num_edges_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> neighbors_;
};

/// Multi-graph dataset with one class label per graph.
struct GraphCollection {
  std::vector<Graph> graphs;
  std::vector<ClassId> graph_labels;
  std::optional<std::vector<std::vector<ClassId>>> node_labels;
  std::optional<std::vector<Matrix>> initial_node_features;

  std::size_t size() const noexcept { return graphs.size(); }

  std::size_t num_classes() const {
    ClassId hi = -1;
    for (ClassId c : graph_labels) hi = std::max(hi, c);
    return static_cast<std::size_t>(hi + 1);
  }

  void validate() const {
    if (graph_labels.size() != graphs.size()) throw DataError("graph label count does not match graph count");
    if (initial_node_features) {
      if (initial_node_features->size() != graphs.size()) throw DataError("initial feature count does not match graph count");
      for (std::size_t i = 0; i < graphs.size(); ++i) {
        if ((*initial_node_features)[i].rows != graphs[i].num_nodes()) {
          throw DataError("initial features of graph " + std::to_string(i) + " have the wrong row count");
        }
      }
    }
  }
};

/// Single-graph node classification dataset.
struct NodeDataset {
  Graph graph;
  Matrix initial_node_features;  // may have zero columns
  std::vector<ClassId> node_labels;
  std::vector<bool> train_mask;
  std::vector<bool> val_mask;
  std::vector<bool> test_mask;

  std::size_t num_nodes() const noexcept { return graph.num_nodes(); }

  std::size_t num_classes() const {
    ClassId hi = -1;
    for (ClassId c : node_labels) hi = std::max(hi, c);
    return static_cast<std::size_t>(hi + 1);
  }
};

inline std::vector<NodeId> mask_indices(const std::vector<bool>& mask) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

/// Disjoint union of several graphs. `node_offsets[g]` is the id of the
/// first node of graph g in the union; `graph_of[u]` maps back.
struct BatchedGraph {
  Graph graph;
  std::vector<std::size_t> node_offsets;
  std::vector<std::uint32_t> graph_of;

  std::size_t num_graphs() const noexcept { return node_offsets.size() - 1; }
};

inline BatchedGraph disjoint_union(std::span<const Graph> graphs) {
  BatchedGraph out;
  out.node_offsets.assign(1, 0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const auto base = static_cast<NodeId>(out.node_offsets.back());
    for (auto [u, v] : graphs[g].edge_list()) edges.emplace_back(base + u, base + v);
    out.node_offsets.push_back(out.node_offsets.back() + graphs[g].num_nodes());
    out.graph_of.insert(out.graph_of.end(), graphs[g].num_nodes(), static_cast<std::uint32_t>(g));
  }
  out.graph = Graph::from_edges(out.node_offsets.back(), edges);
  return out;
}

}  // namespace fea2fea
