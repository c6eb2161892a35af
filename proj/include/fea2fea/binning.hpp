#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fea2fea/error.hpp"
#include "fea2fea/features.hpp"
#include "fea2fea/graph.hpp"

namespace fea2fea {

enum class BinStrategy { equal_width, equal_frequency, zero_inflated };

inline std::string_view to_string(BinStrategy s) {
  switch (s) {
    case BinStrategy::equal_width: return "equal-width";
    case BinStrategy::equal_frequency: return "equal-frequency";
    case BinStrategy::zero_inflated: return "zero-inflated";
  }
  return "?";
}

inline BinStrategy parse_bin_strategy(std::string_view s) {
  if (s == "equal-width") return BinStrategy::equal_width;
  if (s == "equal-frequency") return BinStrategy::equal_frequency;
  if (s == "zero-inflated") return BinStrategy::zero_inflated;
  throw UsageError("unknown binning strategy '" + std::string(s) + "'");
}

/// Discretization of one feature column into `num_bins` classes.
///
/// `boundaries` are the inclusive upper edges of bins 0, 1, ...: a value
/// goes to the first bin whose boundary is >= the value, and past the last
/// boundary into bin `boundaries.size()`. Ties in the data can leave fewer
/// than `num_bins - 1` boundaries; labels still lie in [0, num_bins).
struct BinningSpec {
  std::size_t num_bins = 6;
  BinStrategy strategy = BinStrategy::equal_frequency;
  double spike_value = 0.0;  // zero-inflated only
  std::vector<double> boundaries;

  bool fitted() const noexcept { return !boundaries.empty(); }

  friend bool operator==(const BinningSpec&, const BinningSpec&) = default;
};

namespace detail {

// Quantile cut points of sorted data for `bins` equal-frequency bins,
// deduplicated and with cuts at the maximum dropped (they would only
// produce empty top bins).
inline std::vector<double> quantile_cuts(std::span<const double> sorted, std::size_t bins) {
  std::vector<double> cuts;
  const std::size_t n = sorted.size();
  for (std::size_t i = 1; i < bins; ++i) {
    const std::size_t rank = (i * n + bins - 1) / bins;  // ceil(i n / B)
    const double b = sorted[rank == 0 ? 0 : rank - 1];
    if (b >= sorted.back()) break;
    if (cuts.empty() || b > cuts.back()) cuts.push_back(b);
  }
  return cuts;
}

}  // namespace detail

inline BinningSpec fit_bins(std::span<const double> values, BinningSpec spec) {
  if (spec.num_bins < 2 || spec.num_bins > 64) throw UsageError("number of bins must lie in [2, 64]");
  if (values.empty()) throw BinningError("cannot fit bins on an empty column");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    throw BinningError("feature column is constant; it cannot be split into classes and should be excluded from the feature set");
  }
  spec.boundaries.clear();
  switch (spec.strategy) {
    case BinStrategy::equal_width: {
      const double width = (hi - lo) / static_cast<double>(spec.num_bins);
      for (std::size_t i = 1; i < spec.num_bins; ++i) spec.boundaries.push_back(lo + width * static_cast<double>(i));
      break;
    }
    case BinStrategy::equal_frequency: {
      std::vector<double> sorted(values.begin(), values.end());
      std::sort(sorted.begin(), sorted.end());
      spec.boundaries = detail::quantile_cuts(sorted, spec.num_bins);
      break;
    }
    case BinStrategy::zero_inflated: {
      if (lo < spec.spike_value) throw BinningError("zero-inflated binning expects values >= the spike value");
      std::vector<double> rest;
      for (double v : values) {
        if (v > spec.spike_value) rest.push_back(v);
      }
      spec.boundaries.push_back(spec.spike_value);
      if (!rest.empty() && spec.num_bins > 2) {
        std::sort(rest.begin(), rest.end());
        for (double b : detail::quantile_cuts(rest, spec.num_bins - 1)) spec.boundaries.push_back(b);
      }
      break;
    }
  }
  return spec;
}

inline ClassId apply_bin(double value, const BinningSpec& spec) {
  const auto it = std::lower_bound(spec.boundaries.begin(), spec.boundaries.end(), value);
  return static_cast<ClassId>(it - spec.boundaries.begin());
}

inline std::vector<ClassId> apply_bins(std::span<const double> values, const BinningSpec& spec) {
  if (!spec.fitted()) throw UsageError("binning spec has no boundaries; call fit_bins first");
  std::vector<ClassId> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(apply_bin(v, spec));
  return out;
}

/// Degree and clustering coefficient are dominated by a spike at zero;
/// PageRank and average path length are roughly bell-shaped.
inline BinStrategy default_bin_strategy(std::size_t feature) {
  switch (static_cast<Feature>(feature)) {
    case Feature::deg:
    case Feature::clu: return BinStrategy::zero_inflated;
    case Feature::pr:
    case Feature::avglen: return BinStrategy::equal_frequency;
    default: return BinStrategy::equal_width;
  }
}

inline nlohmann::json to_json(const BinningSpec& s) {
  return {{"strategy", std::string(to_string(s.strategy))},
          {"num_bins", s.num_bins},
          {"spike_value", s.spike_value},
          {"boundaries", s.boundaries}};
}

inline BinningSpec binning_from_json(const nlohmann::json& j) {
  BinningSpec s;
  s.strategy = parse_bin_strategy(j.at("strategy").get<std::string>());
  s.num_bins = j.at("num_bins").get<std::size_t>();
  s.spike_value = j.value("spike_value", 0.0);
  s.boundaries = j.at("boundaries").get<std::vector<double>>();
  return s;
}

}  // namespace fea2fea
