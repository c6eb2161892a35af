#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fea2fea/error.hpp"
#include "fea2fea/graph.hpp"

namespace fea2fea {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  double s = 0.0;
  for (double x : xs) s += x;
  const double mu = s / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return {mu, std::sqrt(ss / static_cast<double>(xs.size()))};
}

/// Fraction of positions where the two label vectors agree.
inline double accuracy(std::span<const ClassId> pred, std::span<const ClassId> truth) {
  if (pred.size() != truth.size()) throw ShapeError("accuracy: prediction and truth lengths differ");
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace fea2fea
