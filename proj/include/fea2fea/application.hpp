#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fea2fea/binning.hpp"
#include "fea2fea/features.hpp"
#include "fea2fea/generators.hpp"
#include "fea2fea/io.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/model.hpp"
#include "fea2fea/multiple.hpp"
#include "fea2fea/parallel.hpp"
#include "fea2fea/split.hpp"
#include "fea2fea/stats.hpp"
#include "fea2fea/train.hpp"

namespace fea2fea {

/// Downstream classifier: structural features in `members` are embedded and
/// merged, then joined with the initial node features. An empty member list
/// is the plain baseline on initial features.
struct AugmentConfig {
  std::vector<std::size_t> members;
  ConcatMethod method = ConcatMethod::simple;
  LayerConfig gnn{ConvType::gin, 1, 64, 2, 3, 0.6, true, true};
  Readout readout = Readout::mean;
  std::size_t embed_dim = 64;
};

inline nlohmann::json to_json(const AugmentConfig& c) {
  return {{"members", c.members}, {"method", std::string(to_string(c.method))}, {"gnn", to_json(c.gnn)}, {"readout", std::string(to_string(c.readout))}, {"embed_dim", c.embed_dim}};
}

/// 64-bit FNV-1a of a string; used to tag run reports with their configuration.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

/// Model input for one graph (or a disjoint union) plus the model config
/// matching it.
struct AugmentedInput {
  ModelConfig config;
  ModelInput input;
  std::vector<std::string> warnings;
};

/// Builds the model input. Structural columns are standardized on
/// `fit_rows`; missing initial features fall back to structural-only input
/// (or a constant column when there is nothing else).
inline AugmentedInput build_augmented_input(const AugmentConfig& cfg, const Graph& g, const Matrix& structural, const Matrix& initial,
                                            std::span<const std::size_t> fit_rows, std::size_t num_classes) {
  AugmentedInput a;
  a.config.layers = cfg.gnn;
  a.config.layers.out_dim = num_classes;
  a.config.num_structural = cfg.members.size();
  a.config.embed_dim = cfg.embed_dim;
  a.config.concat_method = cfg.method;
  a.input.graph = &g;
  for (std::size_t m : cfg.members) {
    if (m >= structural.cols) throw UsageError("structural feature index " + std::to_string(m) + " out of range");
  }
  if (!cfg.members.empty()) a.input.structural = standardized_columns(structural, cfg.members, fit_rows);
  if (initial.cols > 0) {
    a.config.initial_dim = initial.cols;
    a.input.initial = to_tensor(initial);
  } else if (!cfg.members.empty()) {
    a.warnings.push_back("no initial node features; using structural features only");
  } else {
    a.warnings.push_back("no initial node features and no structural features; using a constant input column");
    a.config.initial_dim = 1;
    a.input.initial = Tensor({g.num_nodes(), 1}, 1.0);
  }
  return a;
}

/// The augmented node feature matrix produced by a model's (untrained or
/// trained) encoders: N x (k d + F) for simple concatenation.
inline Tensor augment_features(const GnnModel& model, const ModelInput& in) {
  Tape tape;
  ParameterStore store = model.parameters();
  Binding b(tape, store);
  return model.encode(b, in).value();
}

/// Pre-head activations (node embeddings, or pooled graph embeddings).
inline Matrix export_embeddings(GnnModel& model, const ModelInput& in) {
  Tape tape;
  Rng unused(0);
  const Tensor e = model.forward(tape, in, false, unused).embedding.value();
  Matrix m;
  m.rows = e.rows();
  m.cols = e.cols();
  m.values = e.data;
  return m;
}

struct RunReport {
  std::string dataset;
  nlohmann::json config;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const RunReport& r) {
  return {{"schema", "fea2fea-run-report"}, {"version", 1},           {"dataset", r.dataset}, {"config_hash", config_hash(r.config)},
          {"config", r.config},            {"seeds", r.seeds},        {"per_seed", r.per_seed}, {"mean", r.mean},
          {"std", r.stddev}};
}

inline void finish_report(RunReport& r) {
  const auto ms = mean_std(r.per_seed);
  r.mean = ms.mean;
  r.stddev = ms.std;
}

/// Node classification on the dataset's masks; one model per seed.
inline RunReport classify_nodes(const NodeDataset& ds, const AugmentConfig& cfg, const std::vector<std::uint64_t>& seeds, const TrainOptions& train = {},
                                std::size_t jobs = 1, std::string name = "nodes") {
  if (seeds.empty()) throw UsageError("at least one seed is required");
  if (ds.node_labels.size() != ds.num_nodes()) throw DataError("node label count does not match node count");
  Supervision sup;
  sup.labels = ds.node_labels;
  for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
    if (ds.train_mask[i]) sup.train.push_back(i);
    if (ds.val_mask[i]) sup.val.push_back(i);
    if (ds.test_mask[i]) sup.test.push_back(i);
  }
  const Matrix structural = cfg.members.empty() ? Matrix{} : build_feature_matrix(ds.graph).values;
  const auto aug = build_augmented_input(cfg, ds.graph, structural, ds.initial_node_features, sup.train, ds.num_classes());

  RunReport report{std::move(name), {{"task", "nodes"}, {"model", to_json(cfg)}, {"epochs", train.epochs}, {"patience", train.patience}}, seeds, {}, 0, 0, aug.warnings};
  report.per_seed.assign(seeds.size(), 0.0);
  parallel_for(seeds.size(), jobs, [&](std::size_t s) {
    GnnModel model(aug.config, derive_seed(seeds[s], 0xA991));
    report.per_seed[s] = train_classifier(model, aug.input, sup, train, seeds[s]).test_accuracy;
  });
  finish_report(report);
  return report;
}

struct GraphProtocol {
  double test_fraction = 1.0 / 9.0;  // 8:1 train/test
  std::size_t folds = 10;
};

/// Graph classification: per seed, an 8:1 train/test split of the graphs;
/// inside the training part, k-fold cross validation where each fold serves
/// as the early-stopping set of a model trained on the other folds. The
/// seed's accuracy is the mean test accuracy over the fold models.
inline RunReport classify_graphs(const GraphCollection& c, const AugmentConfig& cfg, const std::vector<std::uint64_t>& seeds, const TrainOptions& train = {},
                                 const GraphProtocol& protocol = {}, std::size_t jobs = 1, std::string name = "graphs") {
  if (seeds.empty()) throw UsageError("at least one seed is required");
  c.validate();
  if (cfg.readout == Readout::none) throw UsageError("graph classification needs a mean or sum readout");
  const auto batched = disjoint_union(c.graphs);
  const std::size_t n = batched.graph.num_nodes();
  Matrix initial;
  initial.rows = n;
  if (c.initial_node_features && !c.initial_node_features->empty()) {
    initial.cols = (*c.initial_node_features)[0].cols;
    initial.values.reserve(n * initial.cols);
    for (const auto& m : *c.initial_node_features) {
      if (m.cols != initial.cols) throw DataError("graphs disagree on the initial feature width");
      initial.values.insert(initial.values.end(), m.values.begin(), m.values.end());
    }
  }
  const Matrix structural = cfg.members.empty() ? Matrix{} : build_feature_matrix(std::span<const Graph>(c.graphs)).values;

  RunReport report{std::move(name),
                   {{"task", "graphs"}, {"model", to_json(cfg)}, {"epochs", train.epochs}, {"patience", train.patience}, {"folds", protocol.folds}, {"test_fraction", protocol.test_fraction}},
                   seeds, {}, 0, 0, {}};

  struct Fold {
    std::size_t seed_idx;
    std::vector<std::size_t> train, val, test;
  };
  std::vector<Fold> tasks;
  std::vector<std::vector<std::size_t>> fit_rows(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto parts = split_indices(c.size(), {1.0 - protocol.test_fraction, 0.0, protocol.test_fraction}, derive_seed(seeds[s], 0x5B17));
    if (parts.test.empty() || parts.train.size() < protocol.folds) throw DataError("too few graphs for the train/test split and folds");
    for (std::size_t g : parts.train) {
      for (std::size_t r = batched.node_offsets[g]; r < batched.node_offsets[g + 1]; ++r) fit_rows[s].push_back(r);
    }
    const auto folds = k_fold(parts.train, protocol.folds, derive_seed(seeds[s], 0xF01D));
    for (std::size_t f = 0; f < folds.size(); ++f) {
      Fold task{s, {}, folds[f], parts.test};
      for (std::size_t g : parts.train) {
        if (!std::binary_search(folds[f].begin(), folds[f].end(), g)) task.train.push_back(g);
      }
      tasks.push_back(std::move(task));
    }
  }

  std::vector<ClassId> labels = c.graph_labels;
  std::vector<double> fold_acc(tasks.size(), 0.0);
  std::vector<AugmentedInput> inputs;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    inputs.push_back(build_augmented_input(cfg, batched.graph, structural, initial, fit_rows[s], c.num_classes()));
    inputs.back().config.readout = cfg.readout;
    inputs.back().input.segments = batched.graph_of;
    inputs.back().input.num_segments = c.size();
  }
  report.warnings = inputs.front().warnings;
  parallel_for(tasks.size(), jobs, [&](std::size_t t) {
    const Fold& f = tasks[t];
    const std::uint64_t seed = derive_seed(seeds[f.seed_idx], t);
    GnnModel model(inputs[f.seed_idx].config, derive_seed(seed, 0xA991));
    Supervision sup{labels, f.train, f.val, f.test};
    fold_acc[t] = train_classifier(model, inputs[f.seed_idx].input, sup, train, seed).test_accuracy;
  });
  report.per_seed.assign(seeds.size(), 0.0);
  for (std::size_t t = 0; t < tasks.size(); ++t) report.per_seed[tasks[t].seed_idx] += fold_acc[t] / static_cast<double>(protocol.folds);
  finish_report(report);
  return report;
}

struct SyntheticGraphTask {
  std::size_t num_graphs = 200;
  std::size_t min_nodes = 20;
  std::size_t max_nodes = 40;
  double min_radius = 0.2;
  double max_radius = 0.4;
  std::size_t num_classes = 3;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Random geometric graphs labelled by their equal-frequency-binned median
/// node degree. Every node carries one constant initial feature.
inline GraphCollection make_degree_median_collection(const SyntheticGraphTask& task, std::uint64_t seed) {
  if (task.num_graphs == 0 || task.min_nodes == 0 || task.max_nodes < task.min_nodes) throw UsageError("invalid synthetic task sizes");
  Rng rng(seed);
  GraphCollection c;
  std::vector<double> medians;
  c.initial_node_features.emplace();
  for (std::size_t i = 0; i < task.num_graphs; ++i) {
    const std::size_t n = task.min_nodes + rng.below(task.max_nodes - task.min_nodes + 1);
    const double radius = rng.uniform(task.min_radius, task.max_radius);
    c.graphs.push_back(generate_random_geometric(n, radius, derive_seed(seed, i)));
    medians.push_back(median(degree(c.graphs.back())));
    Matrix ones;
    ones.rows = n;
    ones.cols = 1;
    ones.values.assign(n, 1.0);
    c.initial_node_features->push_back(std::move(ones));
  }
  BinningSpec spec;
  spec.num_bins = task.num_classes;
  spec.strategy = BinStrategy::equal_frequency;
  spec = fit_bins(medians, spec);
  c.graph_labels = apply_bins(medians, spec);
  // Deduplicated cuts can leave class ids unused; compact them.
  std::vector<long long> raw(c.graph_labels.begin(), c.graph_labels.end());
  c.graph_labels = detail::remap_labels(raw);
  return c;
}

}  // namespace fea2fea
