#pragma once

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqtree {

/// Undirected weighted graph; edges stored with u < v, no duplicates.
struct WeightedGraph {
  struct Edge {
    int u = 0;
    int v = 0;
    double w = 0.0;
  };

  int nodes = 0;
  std::vector<Edge> edges;
  // Provenance for load-scaled task families.
  std::string base_name;
  double load_scale = 1.0;
};

inline void validate_graph(const WeightedGraph& g) {
  if (g.nodes <= 0) throw std::invalid_argument("graph needs a positive node count");
  std::set<std::pair<int, int>> seen;
  for (const auto& e : g.edges) {
    if (e.u < 0 || e.v < 0 || e.u >= g.nodes || e.v >= g.nodes || e.u >= e.v)
      throw std::invalid_argument("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                  ") violates 0 <= u < v < nodes");
    if (!seen.insert({e.u, e.v}).second)
      throw std::invalid_argument("duplicate edge (" + std::to_string(e.u) + "," +
                                  std::to_string(e.v) + ")");
    if (!std::isfinite(e.w)) throw std::invalid_argument("non-finite edge weight");
  }
}

}  // namespace vqtree
