#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fea2fea/binning.hpp"
#include "fea2fea/features.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/model.hpp"
#include "fea2fea/parallel.hpp"
#include "fea2fea/random.hpp"
#include "fea2fea/split.hpp"
#include "fea2fea/stats.hpp"
#include "fea2fea/train.hpp"

namespace fea2fea {

/// Structural features of a node dataset or a graph collection, flattened
/// onto one graph (a disjoint union for collections) with node-level
/// train/val/test rows.
struct FeatureTaskData {
  std::string dataset_id;
  Graph graph;
  NodeFeatureMatrix features;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  std::vector<std::size_t> test_rows;
};

inline FeatureTaskData make_task_data(const NodeDataset& ds, std::string id = "nodes", const FeatureOptions& fopt = {}) {
  FeatureTaskData d;
  d.dataset_id = std::move(id);
  d.graph = ds.graph;
  d.features = build_feature_matrix(ds.graph, fopt);
  for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
    if (i < ds.train_mask.size() && ds.train_mask[i]) d.train_rows.push_back(i);
    if (i < ds.val_mask.size() && ds.val_mask[i]) d.val_rows.push_back(i);
    if (i < ds.test_mask.size() && ds.test_mask[i]) d.test_rows.push_back(i);
  }
  if (d.train_rows.empty()) throw DataError("node dataset has an empty training mask");
  return d;
}

/// Splits the graphs of a collection; every node of a training graph is a
/// training row, and likewise for validation and test graphs.
inline FeatureTaskData make_task_data(const GraphCollection& c, const SplitRatios& graph_ratios, std::uint64_t seed, std::string id = "graphs",
                                      const FeatureOptions& fopt = {}) {
  FeatureTaskData d;
  d.dataset_id = std::move(id);
  auto batched = disjoint_union(c.graphs);
  d.graph = std::move(batched.graph);
  d.features = build_feature_matrix(std::span<const Graph>(c.graphs), fopt);
  const auto parts = split_indices(c.size(), graph_ratios, seed);
  auto add_rows = [&](const std::vector<std::size_t>& graphs, std::vector<std::size_t>& rows) {
    for (std::size_t g : graphs) {
      for (std::size_t r = batched.node_offsets[g]; r < batched.node_offsets[g + 1]; ++r) rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end());
  };
  add_rows(parts.train, d.train_rows);
  add_rows(parts.val, d.val_rows);
  add_rows(parts.test, d.test_rows);
  if (d.train_rows.empty()) throw DataError("graph split left no training graphs");
  return d;
}

/// One (input feature -> binned output feature) prediction problem.
struct PairTask {
  std::size_t input_idx = 0;
  std::size_t output_idx = 1;
  BinningSpec binning;  // num_bins and strategy; fitted inside train_pair
  LayerConfig model = default_prediction_layers();
  std::uint64_t seed = 0;
  TrainOptions train;
};

struct PairOutcome {
  double accuracy = 0.0;
  bool excluded = false;
  std::string reason;
  BinningSpec fitted;
};

/// Fits bins for the output column on the training rows, trains a model
/// from the (standardized) input column to those bins and reports test
/// accuracy. A column that cannot be binned marks the task excluded.
inline PairOutcome train_pair(const PairTask& task, const FeatureTaskData& data) {
  if (task.output_idx == 0) throw UsageError("the constant feature cannot be a prediction target");
  if (task.input_idx >= data.features.values.cols || task.output_idx >= data.features.values.cols) throw UsageError("feature index out of range");
  PairOutcome out;
  const auto column = data.features.column(task.output_idx);
  std::vector<double> fit_values;
  fit_values.reserve(data.train_rows.size());
  for (std::size_t r : data.train_rows) fit_values.push_back(column[r]);
  try {
    out.fitted = fit_bins(fit_values, task.binning);
  } catch (const BinningError& e) {
    out.excluded = true;
    out.reason = e.what();
    return out;
  }
  Supervision sup{apply_bins(column, out.fitted), data.train_rows, data.val_rows, data.test_rows};

  ModelConfig cfg;
  cfg.layers = task.model;
  cfg.layers.out_dim = task.binning.num_bins;
  cfg.initial_dim = 1;
  GnnModel model(cfg, derive_seed(task.seed, 0x1A17));

  const std::size_t col = task.input_idx;
  ModelInput in;
  in.graph = &data.graph;
  in.initial = standardized_columns(data.features.values, std::span<const std::size_t>(&col, 1), data.train_rows);
  out.accuracy = train_classifier(model, in, sup, task.train, task.seed).test_accuracy;
  return out;
}

/// K x K matrix of pairwise prediction accuracies: entry (i, j) is the
/// mean test accuracy of predicting feature j from feature i. Column 0
/// mirrors row 0 and entry (0, 0) is 1. Entries touching an unbinnable feature are flagged excluded.
struct CorrelationMatrix {
  std::size_t size = kNumFeatures;
  std::vector<double> values;
  std::vector<double> stddev;
  std::vector<bool> excluded;
  std::vector<std::vector<double>> samples;  // per-seed accuracies
  nlohmann::json metadata = nlohmann::json::object();

  explicit CorrelationMatrix(std::size_t k = kNumFeatures)
      : size(k), values(k * k, 0.0), stddev(k * k, 0.0), excluded(k * k, false), samples(k * k) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * size + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  bool is_excluded(std::size_t i, std::size_t j) const { return excluded[i * size + j]; }
  void set_excluded(std::size_t i, std::size_t j, bool v = true) { excluded[i * size + j] = v; }
  double std_at(std::size_t i, std::size_t j) const { return stddev[i * size + j]; }
};

struct CorrelationOptions {
  LayerConfig model = default_prediction_layers();
  std::size_t num_bins = 6;
  std::optional<BinStrategy> strategy;  // per-feature default when unset
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainOptions train;
  std::size_t jobs = 1;
};

inline BinningSpec binning_for(std::size_t feature, std::size_t num_bins, std::optional<BinStrategy> strategy) {
  BinningSpec b;
  b.num_bins = num_bins;
  b.strategy = strategy.value_or(default_bin_strategy(feature));
  return b;
}

/// Features (other than the constant) whose training values cannot be binned.
inline std::vector<bool> unbinnable_features(const FeatureTaskData& data, std::size_t num_bins, std::optional<BinStrategy> strategy) {
  const std::size_t k = data.features.values.cols;
  std::vector<bool> bad(k, false);
  for (std::size_t f = 1; f < k; ++f) {
    const auto column = data.features.column(f);
    std::vector<double> vals;
    for (std::size_t r : data.train_rows) vals.push_back(column[r]);
    try {
      fit_bins(vals, binning_for(f, num_bins, strategy));
    } catch (const BinningError&) {
      bad[f] = true;
    }
  }
  return bad;
}

inline CorrelationMatrix build_correlation_matrix(const FeatureTaskData& data, const CorrelationOptions& opt) {
  const std::size_t k = data.features.values.cols;
  if (opt.seeds.empty()) throw UsageError("at least one seed is required");
  CorrelationMatrix R(k);
  const auto bad = unbinnable_features(data, opt.num_bins, opt.strategy);

  struct Job {
    std::size_t i, j, s;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 1; j < k; ++j) {
      if (bad[i] || bad[j]) {
        R.set_excluded(i, j);
        continue;
      }
      for (std::size_t s = 0; s < opt.seeds.size(); ++s) jobs.push_back({i, j, s});
    }
  }
  std::size_t entries = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 1; j < k; ++j) entries += !R.is_excluded(i, j);
  std::vector<PairOutcome> results(jobs.size());
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t n) {
    const Job& jb = jobs[n];
    PairTask task{jb.i, jb.j, binning_for(jb.j, opt.num_bins, opt.strategy), opt.model, derive_seed(opt.seeds[jb.s], jb.i, jb.j), opt.train};
    results[n] = train_pair(task, data);
  });
  for (std::size_t n = 0; n < jobs.size(); ++n) {
    const Job& jb = jobs[n];
    if (results[n].excluded) {
      R.set_excluded(jb.i, jb.j);
      continue;
    }
    R.samples[jb.i * k + jb.j].push_back(results[n].accuracy);
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 1; j < k; ++j) {
      if (R.is_excluded(i, j)) {
        R.samples[i * k + j].clear();
        continue;
      }
      const auto ms = mean_std(R.samples[i * k + j]);
      R(i, j) = ms.mean;
      R.stddev[i * k + j] = ms.std;
    }
  }
  for (std::size_t i = 1; i < k; ++i) {
    R(i, 0) = R(0, i);
    R.stddev[i * k] = R.stddev[i];
    R.samples[i * k] = R.samples[i];
    R.set_excluded(i, 0, R.is_excluded(0, i));
  }
  R(0, 0) = 1.0;
  R.samples[0] = std::vector<double>(opt.seeds.size(), 1.0);

  R.metadata = {{"dataset", data.dataset_id},
                {"model", to_json(opt.model)},
                {"num_bins", opt.num_bins},
                {"strategy", opt.strategy ? std::string(to_string(*opt.strategy)) : std::string("per-feature")},
                {"seeds", opt.seeds},
                {"epochs", opt.train.epochs},
                {"patience", opt.train.patience},
                {"lr", opt.train.adam.lr},
                {"weight_decay", opt.train.adam.weight_decay},
                {"trained_entries", entries},
                {"trained_runs", jobs.size()}};
  return R;
}

inline std::string feature_label(std::size_t i) { return i < kNumFeatures ? std::string(kFeatureLabels[i]) : "F" + std::to_string(i); }

inline void write_correlation_csv(std::ostream& out, const CorrelationMatrix& R) {
  out << "input";
  for (std::size_t j = 0; j < R.size; ++j) out << ',' << feature_label(j);
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < R.size; ++i) {
    out << feature_label(i);
    for (std::size_t j = 0; j < R.size; ++j) {
      if (R.is_excluded(i, j)) {
        out << ",NA";
      } else {
        std::snprintf(buf, sizeof buf, "%.6f", R(i, j));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
}

inline nlohmann::json to_json(const CorrelationMatrix& R) {
  nlohmann::json values = nlohmann::json::array(), stds = nlohmann::json::array(), excl = nlohmann::json::array(),
                 samples = nlohmann::json::array(), names = nlohmann::json::array();
  for (std::size_t i = 0; i < R.size; ++i) {
    names.push_back(feature_label(i));
    nlohmann::json v = nlohmann::json::array(), s = nlohmann::json::array(), e = nlohmann::json::array(), sm = nlohmann::json::array();
    for (std::size_t j = 0; j < R.size; ++j) {
      v.push_back(R.is_excluded(i, j) ? nlohmann::json(nullptr) : nlohmann::json(R(i, j)));
      s.push_back(R.is_excluded(i, j) ? nlohmann::json(nullptr) : nlohmann::json(R.std_at(i, j)));
      e.push_back(static_cast<bool>(R.is_excluded(i, j)));
      sm.push_back(R.samples[i * R.size + j]);
    }
    values.push_back(v);
    stds.push_back(s);
    excl.push_back(e);
    samples.push_back(sm);
  }
  return {{"schema", "fea2fea-correlation"}, {"version", 1}, {"features", names}, {"values", values}, {"std", stds},
          {"excluded", excl}, {"samples", samples}, {"metadata", R.metadata}};
}

inline CorrelationMatrix correlation_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "fea2fea-correlation") throw ParseError("not a correlation matrix document");
  const auto& values = j.at("values");
  CorrelationMatrix R(values.size());
  for (std::size_t i = 0; i < R.size; ++i) {
    for (std::size_t c = 0; c < R.size; ++c) {
      const auto& v = values.at(i).at(c);
      if (v.is_null()) {
        R.set_excluded(i, c);
      } else {
        R(i, c) = v.get<double>();
      }
      if (j.contains("std") && !j["std"][i][c].is_null()) R.stddev[i * R.size + c] = j["std"][i][c].get<double>();
      if (j.contains("samples")) R.samples[i * R.size + c] = j["samples"][i][c].get<std::vector<double>>();
    }
  }
  R.metadata = j.value("metadata", nlohmann::json::object());
  return R;
}

}  // namespace fea2fea
