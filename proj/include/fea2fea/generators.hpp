#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "fea2fea/error.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/random.hpp"

namespace fea2fea {

struct Point2 {
  double x;
  double y;
};

/// Radius just above the connectivity threshold of a random geometric
/// graph: 2 * sqrt(ln n / (pi n)).
inline double default_geometric_radius(std::size_t n) {
  if (n < 2) return std::sqrt(2.0);
  const double nn = static_cast<double>(n);
  return std::min(std::sqrt(2.0), 2.0 * std::sqrt(std::log(nn) / (std::numbers::pi * nn)));
}

/// The seeded point set used by `generate_random_geometric`.
inline std::vector<Point2> geometric_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point2> pts(n);
  for (auto& p : pts) {
    p.x = rng.uniform();
    p.y = rng.uniform();
  }
  return pts;
}

/// Random geometric graph on the unit square: n uniform points, an edge
/// between every pair at Euclidean distance <= radius. Uses a cell grid so
/// construction is near-linear for small radii.
inline Graph generate_random_geometric(std::size_t n, std::optional<double> radius, std::uint64_t seed) {
  if (n == 0) throw DataError("random geometric graph needs at least one node");
  const double r = radius.value_or(default_geometric_radius(n));
  if (!(r > 0.0) || r > std::sqrt(2.0) + 1e-12) throw DataError("radius must lie in (0, sqrt(2)]");

  const auto pts = geometric_points(n, seed);
  const std::size_t cells = std::max<std::size_t>(1, std::min<std::size_t>(1024, static_cast<std::size_t>(1.0 / r)));
  auto cell_of = [&](double c) { return std::min(cells - 1, static_cast<std::size_t>(c * static_cast<double>(cells))); };
  std::vector<std::vector<NodeId>> grid(cells * cells);
  for (std::size_t i = 0; i < n; ++i) grid[cell_of(pts[i].y) * cells + cell_of(pts[i].x)].push_back(static_cast<NodeId>(i));

  const double r2 = r * r;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cx = static_cast<long>(cell_of(pts[i].x));
    const auto cy = static_cast<long>(cell_of(pts[i].y));
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        const long x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= static_cast<long>(cells) || y >= static_cast<long>(cells)) continue;
        for (NodeId j : grid[static_cast<std::size_t>(y) * cells + static_cast<std::size_t>(x)]) {
          if (j <= i) continue;
          const double ddx = pts[i].x - pts[j].x, ddy = pts[i].y - pts[j].y;
          if (ddx * ddx + ddy * ddy <= r2) edges.emplace_back(static_cast<NodeId>(i), j);
        }
      }
    }
  }
  return Graph::from_edges(n, edges);
}

}  // namespace fea2fea
