#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fea2fea/error.hpp"
#include "fea2fea/graph.hpp"

namespace fea2fea {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Splits on whitespace and commas.
inline std::vector<std::string_view> tokenize(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ' ' || c == '\t' || c == ',' || c == '\r' || c == '\n'; };
  while (i < s.size()) {
    while (i < s.size() && is_sep(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_sep(s[i])) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view tok) {
  Int value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
  return value;
}

inline std::optional<double> parse_double(std::string_view tok) {
  // std::from_chars for double is available in libstdc++ 11.
  double value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
  return value;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads `<u> <v>` pairs, one per line. `#` starts a comment. When
/// `num_nodes` is absent the node count is one past the largest id seen.
inline Graph load_edge_list(std::istream& in, std::optional<std::size_t> num_nodes = std::nullopt) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::size_t max_id = 0;
  bool any = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = detail::trim(body);
    if (body.empty()) continue;
    auto toks = detail::tokenize(body);
    if (toks.size() != 2) throw ParseError("expected two node ids", line_no);
    auto u = detail::parse_int<NodeId>(toks[0]);
    auto v = detail::parse_int<NodeId>(toks[1]);
    if (!u || !v) throw ParseError("node ids must be non-negative integers", line_no);
    if (num_nodes && (*u >= *num_nodes || *v >= *num_nodes)) {
      throw ParseError("node id exceeds declared node count " + std::to_string(*num_nodes), line_no);
    }
    max_id = std::max<std::size_t>({max_id, *u, *v});
    any = true;
    edges.emplace_back(*u, *v);
  }
  if (!num_nodes && !any) throw DataError("edge list is empty and no node count was given");
  return Graph::from_edges(num_nodes ? *num_nodes : max_id + 1, edges);
}

inline Graph load_edge_list(const std::filesystem::path& path, std::optional<std::size_t> num_nodes = std::nullopt) {
  auto in = detail::open_input(path);
  return load_edge_list(in, num_nodes);
}

/// Writes the canonical edge list. The node count goes into a comment so
/// isolated trailing nodes survive a reload through `read_edge_list_header`.
inline void save_edge_list(std::ostream& out, const Graph& g) {
  out << "# nodes " << g.num_nodes() << " edges " << g.num_edges() << '\n';
  for (auto [u, v] : g.edge_list()) out << u << ' ' << v << '\n';
}

inline void save_edge_list(const std::filesystem::path& path, const Graph& g) {
  auto out = detail::open_output(path);
  save_edge_list(out, g);
}

/// Returns the node count recorded by `save_edge_list`, if present.
inline std::optional<std::size_t> read_edge_list_header(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  std::istringstream ss(line);
  std::string hash, word;
  std::size_t n = 0;
  if (ss >> hash >> word >> n && hash == "#" && word == "nodes") return n;
  return std::nullopt;
}

namespace detail {

inline std::vector<std::vector<std::string_view>> read_rows(const std::filesystem::path& path, std::vector<std::string>& storage) {
  auto in = open_input(path);
  std::string line;
  while (std::getline(in, line)) storage.push_back(line);
  std::vector<std::vector<std::string_view>> rows;
  rows.reserve(storage.size());
  for (const auto& s : storage) {
    auto t = trim(s);
    if (t.empty()) continue;
    rows.push_back(tokenize(t));
  }
  return rows;
}

inline std::vector<long long> read_int_column(const std::filesystem::path& path) {
  std::vector<std::string> storage;
  auto rows = read_rows(path, storage);
  std::vector<long long> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].empty()) continue;
    auto v = parse_int<long long>(rows[i][0]);
    if (!v) throw ParseError(path.filename().string() + ": expected an integer", i + 1);
    out.push_back(*v);
  }
  return out;
}

// Maps arbitrary integer labels to contiguous ids in ascending label order.
inline std::vector<ClassId> remap_labels(const std::vector<long long>& raw, std::size_t* num_classes = nullptr) {
  std::map<long long, ClassId> ids;
  for (long long v : raw) ids.emplace(v, 0);
  ClassId next = 0;
  for (auto& [k, id] : ids) id = next++;
  std::vector<ClassId> out;
  out.reserve(raw.size());
  for (long long v : raw) out.push_back(ids.at(v));
  if (num_classes) *num_classes = ids.size();
  return out;
}

}  // namespace detail

/// Loads a TUDataset-format directory. Node ids in `_A.txt` are 1-based
/// and global; they are translated to per-graph 0-based ids. Node labels,
/// when present, are one-hot encoded as initial node features.
inline GraphCollection load_tudataset(const std::filesystem::path& dir, const std::string& name) {
  auto file = [&](const char* suffix) { return dir / (name + suffix); };
  for (const char* mandatory : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt"}) {
    if (!std::filesystem::exists(file(mandatory))) throw DataError("missing mandatory file " + file(mandatory).string());
  }

  const auto indicator = detail::read_int_column(file("_graph_indicator.txt"));
  const auto raw_labels = detail::read_int_column(file("_graph_labels.txt"));
  const std::size_t num_graphs = raw_labels.size();

  std::vector<std::size_t> local_id(indicator.size());
  std::vector<std::size_t> graph_sizes(num_graphs, 0);
  for (std::size_t node = 0; node < indicator.size(); ++node) {
    const long long gid = indicator[node];
    if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs) {
      throw ParseError("graph indicator " + std::to_string(gid) + " outside [1, " + std::to_string(num_graphs) + "]", node + 1);
    }
    local_id[node] = graph_sizes[gid - 1]++;
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    if (graph_sizes[g] == 0) throw DataError("graph " + std::to_string(g + 1) + " has no nodes");
  }

  std::vector<std::vector<std::pair<NodeId, NodeId>>> edges(num_graphs);
  {
    std::vector<std::string> storage;
    auto rows = detail::read_rows(file("_A.txt"), storage);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != 2) throw ParseError(name + "_A.txt: expected a node pair", i + 1);
      auto a = detail::parse_int<long long>(rows[i][0]);
      auto b = detail::parse_int<long long>(rows[i][1]);
      if (!a || !b || *a < 1 || *b < 1 || static_cast<std::size_t>(*a) > indicator.size() ||
          static_cast<std::size_t>(*b) > indicator.size()) {
        throw ParseError(name + "_A.txt: node id out of range", i + 1);
      }
      const auto ga = indicator[*a - 1];
      const auto gb = indicator[*b - 1];
      if (ga != gb) throw DataError(name + "_A.txt line " + std::to_string(i + 1) + ": edge crosses graphs " + std::to_string(ga) + " and " + std::to_string(gb));
      edges[ga - 1].emplace_back(static_cast<NodeId>(local_id[*a - 1]), static_cast<NodeId>(local_id[*b - 1]));
    }
  }

  GraphCollection out;
  out.graphs.reserve(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) out.graphs.push_back(Graph::from_edges(graph_sizes[g], edges[g]));
  out.graph_labels = detail::remap_labels(raw_labels);

  if (std::filesystem::exists(file("_node_labels.txt"))) {
    const auto raw = detail::read_int_column(file("_node_labels.txt"));
    if (raw.size() != indicator.size()) throw DataError(name + "_node_labels.txt has " + std::to_string(raw.size()) + " rows, expected " + std::to_string(indicator.size()));
    std::size_t num_node_classes = 0;
    const auto labels = detail::remap_labels(raw, &num_node_classes);
    std::vector<std::vector<ClassId>> per_graph(num_graphs);
    std::vector<Matrix> features;
    features.reserve(num_graphs);
    for (std::size_t g = 0; g < num_graphs; ++g) {
      per_graph[g].resize(graph_sizes[g]);
      features.emplace_back(graph_sizes[g], num_node_classes, 0.0);
    }
    for (std::size_t node = 0; node < indicator.size(); ++node) {
      const auto g = static_cast<std::size_t>(indicator[node] - 1);
      per_graph[g][local_id[node]] = labels[node];
      features[g](local_id[node], static_cast<std::size_t>(labels[node])) = 1.0;
    }
    out.node_labels = std::move(per_graph);
    out.initial_node_features = std::move(features);
  }
  out.validate();
  return out;
}

/// One integer class label per line.
inline std::vector<ClassId> load_node_labels(const std::filesystem::path& path) {
  return detail::remap_labels(detail::read_int_column(path));
}

/// Fixed node split: one line per node holding `train`, `val`, `test` or
/// `-` (unused). Replaces the masks of `ds`.
inline void load_split_masks(const std::filesystem::path& path, NodeDataset& ds) {
  std::vector<std::string> storage;
  const auto rows = detail::read_rows(path, storage);
  if (rows.size() != ds.num_nodes()) {
    throw DataError(path.filename().string() + ": " + std::to_string(rows.size()) + " rows for " + std::to_string(ds.num_nodes()) + " nodes");
  }
  ds.train_mask.assign(rows.size(), false);
  ds.val_mask.assign(rows.size(), false);
  ds.test_mask.assign(rows.size(), false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string_view tag = rows[i].empty() ? std::string_view{} : rows[i][0];
    if (tag == "train") {
      ds.train_mask[i] = true;
    } else if (tag == "val") {
      ds.val_mask[i] = true;
    } else if (tag == "test") {
      ds.test_mask[i] = true;
    } else if (tag != "-") {
      throw ParseError(path.filename().string() + ": expected train, val, test or -, got '" + std::string(tag) + "'", i + 1);
    }
  }
}

/// Whitespace/comma separated real matrix, one row per line; an optional
/// non-numeric first line is treated as a header.
inline Matrix load_matrix(const std::filesystem::path& path) {
  std::vector<std::string> storage;
  auto rows = detail::read_rows(path, storage);
  Matrix m;
  std::size_t start = 0;
  if (!rows.empty() && !rows[0].empty() && !detail::parse_double(rows[0][0])) start = 1;
  m.rows = rows.size() - start;
  m.cols = m.rows ? rows[start].size() : 0;
  m.values.reserve(m.rows * m.cols);
  for (std::size_t r = start; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw ParseError(path.filename().string() + ": ragged row", r + 1);
    for (auto tok : rows[r]) {
      auto v = detail::parse_double(tok);
      if (!v) throw ParseError(path.filename().string() + ": expected a number, got '" + std::string(tok) + "'", r + 1);
      m.values.push_back(*v);
    }
  }
  return m;
}

/// Tab-separated table with a header row; reals printed with 17
/// significant digits so a reload is lossless.
inline void save_tsv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "\t" : "") << header[c];
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "\t" : "") << detail::format_real(m(r, c));
    out << '\n';
  }
}

inline void save_tsv(const std::filesystem::path& path, const Matrix& m, const std::vector<std::string>& header) {
  auto out = detail::open_output(path);
  save_tsv(out, m, header);
}

}  // namespace fea2fea
