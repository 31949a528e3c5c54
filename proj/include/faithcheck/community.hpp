#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "faithcheck/graph.hpp"

namespace faithcheck::community {

// Undirected weighted graph; adj[u] holds (v, w) with v != u, each edge
// listed from both ends.
struct WeightedGraph {
  std::vector<std::vector<std::pair<int, double>>> adj;
  std::vector<double> self_loops;  // optional, same length as adj when used

  int size() const { return static_cast<int>(adj.size()); }
  void add_edge(int u, int v, double w = 1.0);
  double degree(int u) const;
  double total_weight() const;  // 2m
};

double modularity(const WeightedGraph& g, const std::vector<int>& membership, double resolution = 1.0);

struct LeidenOptions {
  double resolution = 1.0;
  double randomness = 0.01;  // refinement temperature
  int max_iterations = 32;  // aggregation rounds
};

// Community label per node, labels 0..k-1 numbered by first occurrence.
std::vector<int> leiden(const WeightedGraph& g, std::uint64_t seed, const LeidenOptions& options = {});

struct HierarchyOptions {
  LeidenOptions leiden;
  std::size_t max_community_size = 10;
  int max_depth = 4;
};

// Level 0 is the finest partition; every level partitions all entities.
std::vector<graph::Community> detect_communities(const graph::PatientGraph& g, std::uint64_t seed,
                                                 const HierarchyOptions& options = {});

// With llm == nullptr the summary is the extractive fallback (member names).
void summarize_communities(graph::PatientGraph& g, llm::Gateway* llm);

std::string extractive_summary(const graph::PatientGraph& g, const graph::Community& c);

}  // namespace faithcheck::community
