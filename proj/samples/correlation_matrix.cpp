// Learns the 5x5 feature correlation matrix on a random geometric graph and
// lists the feature combinations that survive the redundancy filter.

#include <cstdlib>
#include <iostream>

#include "fea2fea.hpp"

using namespace fea2fea;

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 300;
  const double threshold = argc > 2 ? std::strtod(argv[2], nullptr) : 0.85;

  NodeDataset ds;
  ds.graph = generate_random_geometric(n, std::nullopt, 1);
  ds = node_split(std::move(ds), {}, 2);
  const auto data = make_task_data(ds, "geometric");

  CorrelationOptions opt;
  opt.train.epochs = 100;
  opt.jobs = default_jobs();
  const auto R = build_correlation_matrix(data, opt);
  write_correlation_csv(std::cout, R);

  std::cout << "\ncombinations predicting PR at t=" << threshold << ":\n";
  const auto pr = static_cast<std::size_t>(Feature::pr);
  for (const auto& c : filter_combinations(enumerate_combinations(kNumFeatures, pr), R, threshold)) std::cout << "  " << to_string(c) << "\n";
  return 0;
}
