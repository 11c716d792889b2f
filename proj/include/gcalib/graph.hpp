#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gcalib {

// Immutable undirected graph in CSR form. Neighbor lists are sorted, free of
// self-loops and duplicates, and symmetric. Safe for concurrent reads.
struct Graph {
  int num_nodes = 0;
  std::vector<int> row_offsets;  // length num_nodes + 1
  std::vector<int> col_indices;

  std::span<const int> neighbors(int i) const {
    return {col_indices.data() + row_offsets[i],
            static_cast<std::size_t>(row_offsets[i + 1] - row_offsets[i])};
  }
  int degree(int i) const { return row_offsets[i + 1] - row_offsets[i]; }
  int num_undirected_edges() const { return static_cast<int>(col_indices.size()) / 2; }
};

// Three-way node assignment: train fits the backbone, val fits the
// calibrator, test is the evaluation set. Sets are sorted and disjoint.
struct NodeMask {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

namespace graph_core {

// Builds a symmetric CSR graph. Duplicate edges and self-loops are dropped;
// endpoints outside [0, num_nodes) raise InvalidEdge.
Graph build_graph(const std::vector<std::pair<int, int>>& edges, int num_nodes);

// Multi-hop BFS distance to the nearest source node; nullopt marks nodes
// unreachable from every source. Empty sources raise EmptySourceSet.
std::vector<std::optional<int>> bfs_distance_to_set(const Graph& g, const std::vector<int>& sources);

// Smoothed log-ratio ln((n_a+1)/(n_d+1)) of agreeing to disagreeing
// neighbors under the given per-node labels. Isolated nodes get 0.
std::vector<double> node_homophily(const Graph& g, const std::vector<int>& pred_labels);

// Graph-level mean fraction of same-label neighbors; isolated nodes
// contribute 0 to the mean.
double homophily_index(const Graph& g, const std::vector<int>& true_labels);

// Sorted neighbor list with i itself inserted.
std::vector<int> neighbors_with_self(const Graph& g, int i);

// All nodes at distance exactly 1 from the train set, excluding train nodes.
std::vector<int> train_neighbor_set(const Graph& g, const std::vector<int>& train);

// Parses an edge-list file: one edge per line, two whitespace-separated
// 0-based node ids; '#' lines and blank lines are skipped.
Graph read_edge_file(const std::string& path, int num_nodes);

void write_edge_file(const std::string& path, const Graph& g);

}  // namespace graph_core
}  // namespace gcalib
