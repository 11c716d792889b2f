#include "gcalib/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "gcalib/errors.hpp"

namespace gcalib::graph_core {

Graph build_graph(const std::vector<std::pair<int, int>>& edges, int num_nodes) {
  std::vector<std::pair<int, int>> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes) {
      throw InvalidEdge("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (a == b) continue;
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  Graph g;
  g.num_nodes = num_nodes;
  g.row_offsets.assign(num_nodes + 1, 0);
  for (const auto& [a, b] : directed) g.row_offsets[a + 1]++;
  for (int i = 0; i < num_nodes; ++i) g.row_offsets[i + 1] += g.row_offsets[i];
  g.col_indices.reserve(directed.size());
  for (const auto& [a, b] : directed) g.col_indices.push_back(b);
  return g;
}

std::vector<std::optional<int>> bfs_distance_to_set(const Graph& g, const std::vector<int>& sources) {
  if (sources.empty()) throw EmptySourceSet("bfs_distance_to_set: no source nodes");
  std::vector<int> dist(g.num_nodes, -1);
  std::deque<int> queue;
  for (int s : sources) {
    if (dist[s] != 0) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : g.neighbors(u)) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  std::vector<std::optional<int>> out(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    if (dist[i] >= 0) out[i] = dist[i];
  }
  return out;
}

std::vector<double> node_homophily(const Graph& g, const std::vector<int>& pred_labels) {
  std::vector<double> out(g.num_nodes, 0.0);
  for (int i = 0; i < g.num_nodes; ++i) {
    int agree = 0, disagree = 0;
    for (int j : g.neighbors(i)) {
      if (pred_labels[j] == pred_labels[i])
        ++agree;
      else
        ++disagree;
    }
    out[i] = std::log((agree + 1.0) / (disagree + 1.0));
  }
  return out;
}

double homophily_index(const Graph& g, const std::vector<int>& true_labels) {
  if (g.num_nodes == 0) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < g.num_nodes; ++i) {
    const int deg = g.degree(i);
    if (deg == 0) continue;
    int agree = 0;
    for (int j : g.neighbors(i)) {
      if (true_labels[j] == true_labels[i]) ++agree;
    }
    sum += static_cast<double>(agree) / deg;
  }
  return sum / g.num_nodes;
}

std::vector<int> neighbors_with_self(const Graph& g, int i) {
  auto nbrs = g.neighbors(i);
  std::vector<int> out;
  out.reserve(nbrs.size() + 1);
  out.insert(out.end(), nbrs.begin(), nbrs.end());
  out.insert(std::lower_bound(out.begin(), out.end(), i), i);
  return out;
}

std::vector<int> train_neighbor_set(const Graph& g, const std::vector<int>& train) {
  std::vector<char> is_train(g.num_nodes, 0);
  for (int t : train) is_train[t] = 1;
  std::vector<char> is_nbr(g.num_nodes, 0);
  for (int t : train) {
    for (int j : g.neighbors(t)) {
      if (!is_train[j]) is_nbr[j] = 1;
    }
  }
  std::vector<int> out;
  for (int i = 0; i < g.num_nodes; ++i) {
    if (is_nbr[i]) out.push_back(i);
  }
  return out;
}

Graph read_edge_file(const std::string& path, int num_nodes) {
  std::ifstream in(path);
  if (!in) throw BadManifest("cannot open edge file: " + path);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long a, b;
    if (!(ls >> a >> b)) {
      throw BadManifest(path + ":" + std::to_string(lineno) + ": expected two node ids");
    }
    if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes) {
      throw InvalidEdge(path + ":" + std::to_string(lineno) + ": node id out of range");
    }
    edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
  }
  return build_graph(edges, num_nodes);
}

void write_edge_file(const std::string& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw BadManifest("cannot write edge file: " + path);
  out << "# undirected edge list, one edge per line\n";
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int j : g.neighbors(i)) {
      if (i < j) out << i << ' ' << j << '\n';
    }
  }
}

}  // namespace gcalib::graph_core
