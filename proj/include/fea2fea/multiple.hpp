#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fea2fea/binning.hpp"
#include "fea2fea/concat.hpp"
#include "fea2fea/model.hpp"
#include "fea2fea/parallel.hpp"
#include "fea2fea/single.hpp"
#include "fea2fea/stats.hpp"
#include "fea2fea/train.hpp"

namespace fea2fea {

struct FeatureCombination {
  std::vector<std::size_t> members;  // ascending, target excluded
  std::size_t target = 0;

  std::size_t size() const noexcept { return members.size(); }
  bool contains(std::size_t f) const { return std::binary_search(members.begin(), members.end(), f); }
  friend bool operator==(const FeatureCombination&, const FeatureCombination&) = default;
};

inline std::string to_string(const FeatureCombination& c) {
  std::string s = "(";
  for (std::size_t i = 0; i < c.members.size(); ++i) s += (i ? "," : "") + feature_label(c.members[i]);
  return s + ")";
}

/// Every subset of size 2..4 of the features other than `target`, ordered
/// by size and then lexicographically.
inline std::vector<FeatureCombination> enumerate_combinations(std::size_t num_features, std::size_t target) {
  if (num_features > 16) throw UsageError("combination enumeration is limited to 16 features");
  if (target >= num_features) throw UsageError("target feature " + std::to_string(target) + " out of range");
  std::vector<std::size_t> pool;
  for (std::size_t f = 0; f < num_features; ++f) {
    if (f != target) pool.push_back(f);
  }
  std::vector<FeatureCombination> out;
  for (std::size_t k = 2; k <= std::min<std::size_t>(4, pool.size()); ++k) {
    // Lexicographic k-subsets of pool via an index vector.
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      FeatureCombination c{{}, target};
      for (std::size_t i : idx) c.members.push_back(pool[i]);
      out.push_back(std::move(c));
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == pool.size() - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t m = i; m < k; ++m) idx[m] = idx[m - 1] + 1;
    }
  }
  return out;
}

/// Keeps a combination only if no pair inside it is redundant, i.e. both
/// R(i, j) and R(j, i) are below the threshold. Excluded entries count as
/// redundant.
inline std::vector<FeatureCombination> filter_combinations(const std::vector<FeatureCombination>& combs, const CorrelationMatrix& R, double threshold = 0.85) {
  std::vector<FeatureCombination> out;
  for (const auto& c : combs) {
    bool keep = true;
    for (std::size_t a = 0; a < c.members.size() && keep; ++a) {
      for (std::size_t b = a + 1; b < c.members.size() && keep; ++b) {
        const std::size_t i = c.members[a], j = c.members[b];
        if (i >= R.size || j >= R.size) throw UsageError("combination member outside the correlation matrix");
        if (R.is_excluded(i, j) || R.is_excluded(j, i) || R(i, j) >= threshold || R(j, i) >= threshold) keep = false;
      }
    }
    if (keep) out.push_back(c);
  }
  return out;
}

struct CombinationResult {
  FeatureCombination combination;
  ConcatMethod method = ConcatMethod::simple;
  double accuracy = 0.0;  // mean over seeds
  double stddev = 0.0;
  std::vector<double> per_seed;
  bool excluded = false;
};

struct MultiOptions {
  LayerConfig model = default_prediction_layers();
  std::size_t embed_dim = 64;
  std::size_t num_bins = 6;
  std::optional<BinStrategy> strategy;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainOptions train;
  std::size_t jobs = 1;
};

/// Test accuracy of predicting the binned target from the combination's
/// features for one seed. Each member column is standardized on the
/// training rows and embedded by its own encoder.
inline double train_multi_once(const FeatureCombination& comb, ConcatMethod method, const FeatureTaskData& data, const MultiOptions& opt, std::uint64_t seed,
                               const BinningSpec& fitted) {
  const auto target = data.features.column(comb.target);
  Supervision sup{apply_bins(target, fitted), data.train_rows, data.val_rows, data.test_rows};
  ModelConfig cfg;
  cfg.layers = opt.model;
  cfg.layers.out_dim = opt.num_bins;
  cfg.num_structural = comb.size();
  cfg.embed_dim = opt.embed_dim;
  cfg.concat_method = method;
  GnnModel model(cfg, derive_seed(seed, 0x1A17));
  ModelInput in;
  in.graph = &data.graph;
  in.structural = standardized_columns(data.features.values, comb.members, data.train_rows);
  return train_classifier(model, in, sup, opt.train, seed).test_accuracy;
}

/// Trains every (combination, method, seed) task and aggregates over seeds.
/// Results keep the order of `combs` x `methods`.
inline std::vector<CombinationResult> run_combinations(const std::vector<FeatureCombination>& combs, const std::vector<ConcatMethod>& methods,
                                                       const FeatureTaskData& data, const MultiOptions& opt) {
  if (opt.seeds.empty()) throw UsageError("at least one seed is required");
  std::vector<CombinationResult> results;
  for (const auto& c : combs) {
    if (c.members.empty() || c.contains(c.target)) throw UsageError("invalid combination " + to_string(c));
    for (ConcatMethod m : methods) results.push_back({c, m, 0.0, 0.0, std::vector<double>(opt.seeds.size(), 0.0), false});
  }
  if (results.empty()) return results;

  // One binning of the target, fitted on training rows, shared by all tasks.
  const std::size_t target = combs.front().target;
  for (const auto& c : combs) {
    if (c.target != target) throw UsageError("all combinations must share one target");
  }
  const auto column = data.features.column(target);
  std::vector<double> fit_values;
  for (std::size_t r : data.train_rows) fit_values.push_back(column[r]);
  BinningSpec fitted;
  try {
    BinningSpec spec;
    spec.num_bins = opt.num_bins;
    spec.strategy = opt.strategy.value_or(default_bin_strategy(target));
    fitted = fit_bins(fit_values, spec);
  } catch (const BinningError&) {
    for (auto& r : results) {
      r.excluded = true;
      r.per_seed.clear();
    }
    return results;
  }

  const std::size_t ns = opt.seeds.size();
  parallel_for(results.size() * ns, opt.jobs, [&](std::size_t n) {
    auto& r = results[n / ns];
    std::uint64_t seed = derive_seed(opt.seeds[n % ns], r.combination.target, static_cast<std::uint64_t>(r.method));
    for (std::size_t f : r.combination.members) seed = derive_seed(seed, f);
    r.per_seed[n % ns] = train_multi_once(r.combination, r.method, data, opt, seed, fitted);
  });
  for (auto& r : results) {
    const auto ms = mean_std(r.per_seed);
    r.accuracy = ms.mean;
    r.stddev = ms.std;
  }
  return results;
}

inline CombinationResult train_multi(const FeatureCombination& comb, ConcatMethod method, const FeatureTaskData& data, const MultiOptions& opt) {
  return run_combinations({comb}, {method}, data, opt).front();
}

struct SummaryRow {
  std::size_t target = 0;
  std::size_t k = 0;
  ConcatMethod method = ConcatMethod::simple;
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Mean and population standard deviation of accuracy per (target, size, method).
inline std::vector<SummaryRow> summarize(const std::vector<CombinationResult>& results) {
  std::map<std::tuple<std::size_t, std::size_t, int>, std::vector<double>> groups;
  for (const auto& r : results) {
    if (!r.excluded) groups[{r.combination.target, r.combination.size(), static_cast<int>(r.method)}].push_back(r.accuracy);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, accs] : groups) {
    const auto ms = mean_std(accs);
    out.push_back({std::get<0>(key), std::get<1>(key), static_cast<ConcatMethod>(std::get<2>(key)), accs.size(), ms.mean, ms.std});
  }
  return out;
}

inline nlohmann::json to_json(const CombinationResult& r) {
  return {{"members", r.combination.members},
          {"target", r.combination.target},
          {"k", r.combination.size()},
          {"method", std::string(to_string(r.method))},
          {"accuracy", r.excluded ? nlohmann::json(nullptr) : nlohmann::json(r.accuracy)},
          {"std", r.excluded ? nlohmann::json(nullptr) : nlohmann::json(r.stddev)},
          {"per_seed", r.per_seed},
          {"excluded", r.excluded}};
}

inline nlohmann::json to_json(const std::vector<CombinationResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) arr.push_back(to_json(r));
  return arr;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "target,k,method,count,mean,std\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.mean, r.stddev);
    out << feature_label(r.target) << ',' << r.k << ',' << to_string(r.method) << ',' << r.count << ',' << buf << '\n';
  }
}

}  // namespace fea2fea
