// Prints the structural feature table of a small graph read from an edge
// list (or a built-in example graph).

#include <iomanip>
#include <iostream>

#include "fea2fea.hpp"

using namespace fea2fea;

int main(int argc, char** argv) try {
  Graph g;
  if (argc > 1) {
    g = load_edge_list(argv[1], read_edge_list_header(argv[1]));
  } else {
    // Two triangles joined by a bridge, plus an isolated node.
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {4, 5}, {5, 3}};
    g = Graph::from_edges(7, edges);
  }
  const auto f = build_feature_matrix(g);
  std::cout << "node";
  for (auto label : kFeatureLabels) std::cout << std::setw(10) << label;
  std::cout << "\n" << std::fixed << std::setprecision(4);
  for (std::size_t u = 0; u < f.num_nodes(); ++u) {
    std::cout << std::setw(4) << u;
    for (std::size_t k = 0; k < kNumFeatures; ++k) std::cout << std::setw(10) << f.values(u, k);
    std::cout << "\n";
  }
  return 0;
} catch (const Error& e) {
  std::cerr << e.what() << "\n";
  return static_cast<int>(e.exit_code());
}
