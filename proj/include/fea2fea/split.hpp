#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fea2fea/error.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/random.hpp"

namespace fea2fea {

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Bucket sizes for `count` items: floor each bucket, remainder to train.
inline std::array<std::size_t, 3> split_sizes(std::size_t count, const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0) throw UsageError("split ratios must be non-negative");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
  const double n = static_cast<double>(count);
  const auto val = static_cast<std::size_t>(std::floor(n * r.val + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(n * r.test + 1e-9));
  return {count - val - test, val, test};
}

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, count) cut into train/val/test. Each part is
/// returned in ascending order.
inline IndexSplit split_indices(std::size_t count, const SplitRatios& ratios, std::uint64_t seed) {
  const auto sizes = split_sizes(count, ratios);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  IndexSplit out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes[0]), order.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), order.end());
  for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

/// Assigns every node of the dataset to exactly one of the three masks.
inline NodeDataset node_split(NodeDataset dataset, const SplitRatios& ratios, std::uint64_t seed) {
  const std::size_t n = dataset.num_nodes();
  if (n < 3) throw DataError("node split needs at least 3 nodes");
  const auto parts = split_indices(n, ratios, seed);
  dataset.train_mask.assign(n, false);
  dataset.val_mask.assign(n, false);
  dataset.test_mask.assign(n, false);
  for (auto i : parts.train) dataset.train_mask[i] = true;
  for (auto i : parts.val) dataset.val_mask[i] = true;
  for (auto i : parts.test) dataset.test_mask[i] = true;
  return dataset;
}

/// Partitions `items` into `k` folds of near-equal size (the first
/// `size % k` folds get one extra item), after a seeded shuffle.
inline std::vector<std::vector<std::size_t>> k_fold(std::vector<std::size_t> items, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > items.size()) throw UsageError("fold count must lie in [2, number of items]");
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(items));
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = items.size() / k, extra = items.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(items.begin() + static_cast<std::ptrdiff_t>(pos), items.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(folds[f].begin(), folds[f].end());
    pos += len;
  }
  return folds;
}

}  // namespace fea2fea
