#include <chrono>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "fea2fea.hpp"
#include "oracles.hpp"

using namespace fea2fea;

namespace {

Graph star(std::size_t leaves) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (std::size_t i = 1; i <= leaves; ++i) e.emplace_back(0, static_cast<NodeId>(i));
  return Graph::from_edges(leaves + 1, e);
}

void expect_near(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Features, Constant) {
  EXPECT_EQ(constant_feature(oracle::path(3)), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(constant_feature(oracle::complete(4), 2.5), (std::vector<double>(4, 2.5)));
  EXPECT_EQ(constant_feature(Graph::from_edges(3, std::vector<std::pair<NodeId, NodeId>>{})), (std::vector<double>{1, 1, 1}));
}

TEST(Features, Degree) {
  EXPECT_EQ(degree(oracle::path(3)), (std::vector<double>{1, 2, 1}));
  EXPECT_EQ(degree(oracle::complete(4)), (std::vector<double>{3, 3, 3, 3}));
  EXPECT_EQ(degree(Graph::from_edges(1, std::vector<std::pair<NodeId, NodeId>>{})), (std::vector<double>{0}));
}

TEST(Features, Clustering) {
  EXPECT_EQ(clustering_coefficient(oracle::complete(3)), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(clustering_coefficient(star(3))[0], 0.0);
  std::vector<std::pair<NodeId, NodeId>> k4m{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}};
  const auto c = clustering_coefficient(Graph::from_edges(4, k4m));
  expect_near(c, oracle::clustering(Graph::from_edges(4, k4m)), 0.0);
  EXPECT_DOUBLE_EQ(c[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[2], 1.0);
  EXPECT_DOUBLE_EQ(c[3], 1.0);
}

TEST(Features, PageRankSmallCases) {
  expect_near(pagerank(oracle::complete(3)), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-8);
  const auto p3 = pagerank(oracle::path(3));
  expect_near(p3, oracle::pagerank(oracle::path(3)), 1e-6);
  EXPECT_NEAR(p3[0], 0.2568, 1e-4);
  EXPECT_NEAR(p3[1], 0.4865, 1e-4);
  EXPECT_NEAR(p3[2], 0.2568, 1e-4);
  expect_near(pagerank(Graph::from_edges(1, std::vector<std::pair<NodeId, NodeId>>{})), {1.0}, 1e-12);
}

TEST(Features, PageRankNonConvergenceCarriesResidual) {
  PageRankOptions opt;
  opt.max_iter = 2;
  opt.tol = 1e-15;
  try {
    pagerank(oracle::path(5), opt);
    FAIL() << "expected non-convergence";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
    EXPECT_EQ(e.exit_code(), ExitCode::convergence);
  }
}

TEST(Features, AveragePathLength) {
  EXPECT_EQ(average_path_length(oracle::path(3)), (std::vector<double>{1.5, 1.0, 1.5}));
  EXPECT_EQ(average_path_length(oracle::complete(5)), (std::vector<double>(5, 1.0)));
  std::vector<std::pair<NodeId, NodeId>> two{{0, 1}, {2, 3}};
  EXPECT_EQ(average_path_length(Graph::from_edges(4, two)), (std::vector<double>(4, 1.0)));
  EXPECT_EQ(average_path_length(Graph::from_edges(2, std::vector<std::pair<NodeId, NodeId>>{})), (std::vector<double>{0, 0}));
}

TEST(Features, FeatureMatrixRows) {
  const auto k3 = build_feature_matrix(oracle::complete(3));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(k3.values(r, 0), 1.0);
    EXPECT_EQ(k3.values(r, 1), 2.0);
    EXPECT_EQ(k3.values(r, 2), 1.0);
    EXPECT_NEAR(k3.values(r, 3), 1.0 / 3, 1e-8);
    EXPECT_EQ(k3.values(r, 4), 1.0);
  }
  const auto p3 = build_feature_matrix(oracle::path(3));
  EXPECT_EQ(p3.values(1, 1), 2.0);
  EXPECT_EQ(p3.values(1, 2), 0.0);
  EXPECT_NEAR(p3.values(1, 3), oracle::pagerank(oracle::path(3))[1], 1e-6);
  EXPECT_EQ(p3.values(1, 4), 1.0);
  const auto one = build_feature_matrix(Graph::from_edges(1, std::vector<std::pair<NodeId, NodeId>>{}));
  EXPECT_EQ(one.values.values, (std::vector<double>{1, 0, 0, 1, 0}));
}

TEST(Features, MatchOraclesOnRandomFamily) {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t s = 0; s < 150; ++s) {
    Rng rng(s);
    const std::size_t n = 1 + rng.below(12);
    const double p = rng.uniform(0.05, 0.8);
    const Graph g = oracle::random_graph(n, p, derive_seed(s, 1));
    const auto f = build_feature_matrix(g);
    expect_near(f.column(Feature::deg), [&] {
      std::vector<double> d(n, 0.0);
      const auto a = oracle::adjacency(g);
      for (std::size_t i = 0; i < n; ++i) d[i] = std::accumulate(a[i].begin(), a[i].end(), 0.0);
      return d;
    }(), 0.0);
    EXPECT_EQ(f.column(Feature::clu), oracle::clustering(g));
    expect_near(f.column(Feature::pr), oracle::pagerank(g), 1e-6);
    EXPECT_EQ(f.column(Feature::avglen), oracle::average_path_length(g));
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(Features, Invariants) {
  for (std::uint64_t s = 0; s < 60; ++s) {
    const Graph g = oracle::random_graph(15, 0.25, s);
    const auto pr = pagerank(g);
    EXPECT_NEAR(std::accumulate(pr.begin(), pr.end(), 0.0), 1.0, 1e-6);
    for (double c : clustering_coefficient(g)) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
    const auto d = oracle::floyd_warshall(g);
    double diameter = 0;
    bool connected = true;
    for (const auto& row : d)
      for (double x : row) {
        if (std::isfinite(x)) diameter = std::max(diameter, x);
        else connected = false;
      }
    if (connected) {
      for (double a : average_path_length(g)) {
        EXPECT_GE(a, 1.0);
        EXPECT_LE(a, diameter);
      }
    }
  }
}

TEST(Features, StackedCollectionsComputePerGraph) {
  std::vector<Graph> gs{oracle::path(3), oracle::complete(3)};
  const auto m = build_feature_matrix(std::span<const Graph>(gs));
  ASSERT_EQ(m.num_nodes(), 6u);
  EXPECT_NEAR(m.values(0, 3), oracle::pagerank(oracle::path(3))[0], 1e-6);
  EXPECT_NEAR(m.values(4, 3), 1.0 / 3, 1e-8);
}

TEST(Features, TsvRoundTripIsLossless) {
  const auto f = build_feature_matrix(oracle::random_graph(12, 0.3, 4));
  std::stringstream ss;
  save_tsv(ss, f.values, feature_header());
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "cons\tdeg\tclu\tpr\tavglen");
  for (std::size_t r = 0; r < f.values.rows; ++r) {
    for (std::size_t c = 0; c < f.values.cols; ++c) {
      double v;
      ss >> v;
      EXPECT_EQ(v, f.values(r, c));
    }
  }
}

TEST(Binning, EqualWidth) {
  std::vector<double> v{0, 1, 2, 3, 4, 5};
  BinningSpec spec{6, BinStrategy::equal_width, 0.0, {}};
  EXPECT_EQ(apply_bins(v, fit_bins(v, spec)), (std::vector<ClassId>{0, 1, 2, 3, 4, 5}));
}

TEST(Binning, ZeroInflatedSpike) {
  std::vector<double> v{0, 0, 0, 0.5, 0.9};
  BinningSpec spec{2, BinStrategy::zero_inflated, 0.0, {}};
  EXPECT_EQ(apply_bins(v, fit_bins(v, spec)), (std::vector<ClassId>{0, 0, 0, 1, 1}));
  std::vector<double> neg{-1, 0, 1};
  EXPECT_THROW(fit_bins(neg, spec), BinningError);
}

TEST(Binning, ZeroInflatedSeparatesZerosFromRest) {
  Rng rng(3);
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(rng.bernoulli(0.6) ? 0.0 : rng.uniform(0.01, 1.0));
  const auto spec = fit_bins(v, {6, BinStrategy::zero_inflated, 0.0, {}});
  const auto labels = apply_bins(v, spec);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(labels[i] == 0, v[i] == 0.0);
}

TEST(Binning, EqualFrequencyCounts) {
  Rng rng(11);
  std::vector<double> v(1000);
  for (double& x : v) x = rng.uniform();
  const auto labels = apply_bins(v, fit_bins(v, {4, BinStrategy::equal_frequency, 0.0, {}}));
  // Oracle: the rank of each value in sorted order determines its quarter.
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> counts(4, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    ++counts[static_cast<std::size_t>(labels[i])];
    const auto rank = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
    EXPECT_EQ(labels[i], static_cast<ClassId>(rank / 250));
  }
  for (int c : counts) EXPECT_NEAR(c, 250, 1);
}

TEST(Binning, ClampAndRightClosedTies) {
  std::vector<double> v{1, 2, 3, 4};
  const auto spec = fit_bins(v, {3, BinStrategy::equal_width, 0.0, {}});
  EXPECT_EQ(apply_bin(-100, spec), 0);
  EXPECT_EQ(apply_bin(100, spec), 2);
  EXPECT_EQ(apply_bin(spec.boundaries[0], spec), 0);
  EXPECT_EQ(apply_bin(std::nextafter(spec.boundaries[0], 10.0), spec), 1);
}

TEST(Binning, MonotoneAndReproducible) {
  Rng rng(5);
  std::vector<double> v(300);
  for (double& x : v) x = std::floor(rng.uniform(0, 20));
  for (auto strat : {BinStrategy::equal_width, BinStrategy::equal_frequency, BinStrategy::zero_inflated}) {
    const auto spec = fit_bins(v, {6, strat, 0.0, {}});
    const auto labels = apply_bins(v, spec);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_GE(labels[i], 0);
      EXPECT_LT(labels[i], 6);
      for (std::size_t j = 0; j < v.size(); ++j)
        if (v[i] <= v[j]) {
          EXPECT_LE(labels[i], labels[j]);
        }
    }
    EXPECT_EQ(apply_bins(v, spec), labels);
    EXPECT_TRUE(std::is_sorted(spec.boundaries.begin(), spec.boundaries.end()));
    EXPECT_EQ(std::adjacent_find(spec.boundaries.begin(), spec.boundaries.end()), spec.boundaries.end());
  }
}

TEST(Binning, ConstantColumnAsksForExclusion) {
  std::vector<double> v(10, 0.0);
  try {
    fit_bins(v, {});
    FAIL();
  } catch (const BinningError& e) {
    EXPECT_NE(std::string(e.what()).find("excluded"), std::string::npos);
  }
  EXPECT_THROW(fit_bins(v, {1, BinStrategy::equal_width, 0.0, {}}), UsageError);
  EXPECT_THROW(fit_bins(v, {65, BinStrategy::equal_width, 0.0, {}}), UsageError);
}

TEST(Binning, JsonRoundTripAndDefaults) {
  std::vector<double> v{0, 0, 1, 2, 3, 5, 8};
  const auto spec = fit_bins(v, {4, BinStrategy::zero_inflated, 0.0, {}});
  EXPECT_EQ(binning_from_json(nlohmann::json::parse(to_json(spec).dump())), spec);
  EXPECT_EQ(default_bin_strategy(1), BinStrategy::zero_inflated);
  EXPECT_EQ(default_bin_strategy(2), BinStrategy::zero_inflated);
  EXPECT_EQ(default_bin_strategy(3), BinStrategy::equal_frequency);
  EXPECT_EQ(default_bin_strategy(4), BinStrategy::equal_frequency);
}

TEST(Binning, SelfPredictionLabelsAreAFunctionOfTheInput) {
  const Graph g = generate_random_geometric(300, std::nullopt, 2);
  const auto deg = degree(g);
  const auto labels = apply_bins(deg, fit_bins(deg, {6, BinStrategy::zero_inflated, 0.0, {}}));
  std::map<double, ClassId> seen;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    auto [it, fresh] = seen.emplace(deg[i], labels[i]);
    EXPECT_EQ(it->second, labels[i]);
  }
}
