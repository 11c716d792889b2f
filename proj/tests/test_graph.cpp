#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "gcalib/errors.hpp"
#include "gcalib/graph.hpp"
#include "gcalib/rng.hpp"

using namespace gcalib;
using namespace gcalib::graph_core;

namespace {

std::vector<int> as_vector(std::span<const int> s) { return {s.begin(), s.end()}; }

Graph random_graph(Rng& rng, int n, double p) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.next_double() < p) edges.emplace_back(i, j);
    }
  }
  return build_graph(edges, n);
}

// Brute-force multi-source shortest hop count by |V| rounds of relaxation.
std::vector<std::optional<int>> bfs_oracle(const Graph& g, const std::vector<int>& sources) {
  const int inf = 1 << 29;
  std::vector<int> dist(g.num_nodes, inf);
  for (int s : sources) dist[s] = 0;
  for (int round = 0; round < g.num_nodes; ++round) {
    for (int u = 0; u < g.num_nodes; ++u) {
      for (int v : g.neighbors(u)) dist[u] = std::min(dist[u], dist[v] + 1);
    }
  }
  std::vector<std::optional<int>> out(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    if (dist[i] < inf) out[i] = dist[i];
  }
  return out;
}

}  // namespace

TEST_CASE("build_graph produces a symmetric deduplicated CSR") {
  const Graph g = build_graph({{0, 1}}, 2);
  CHECK(as_vector(g.neighbors(0)) == std::vector<int>{1});
  CHECK(as_vector(g.neighbors(1)) == std::vector<int>{0});

  const Graph h = build_graph({{0, 1}, {1, 0}, {0, 0}}, 2);
  CHECK(as_vector(h.neighbors(0)) == std::vector<int>{1});
  CHECK(as_vector(h.neighbors(1)) == std::vector<int>{0});
  CHECK(h.num_undirected_edges() == 1);
}

TEST_CASE("build_graph rejects out-of-range endpoints") {
  CHECK_THROWS_AS(build_graph({{0, 5}}, 3), InvalidEdge);
  CHECK_THROWS_AS(build_graph({{-1, 0}}, 3), InvalidEdge);
}

TEST_CASE("adjacency symmetry holds on random graphs") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(40));
    const Graph g = random_graph(rng, n, 0.15);
    for (int i = 0; i < n; ++i) {
      for (int j : g.neighbors(i)) {
        const auto nbrs = g.neighbors(j);
        CHECK(std::binary_search(nbrs.begin(), nbrs.end(), i));
      }
    }
  }
}

TEST_CASE("bfs distances on a path") {
  const Graph g = build_graph({{0, 1}, {1, 2}}, 3);
  auto d = bfs_distance_to_set(g, {0});
  CHECK(*d[0] == 0);
  CHECK(*d[1] == 1);
  CHECK(*d[2] == 2);

  d = bfs_distance_to_set(g, {0, 2});
  CHECK(*d[0] == 0);
  CHECK(*d[1] == 1);
  CHECK(*d[2] == 0);
}

TEST_CASE("bfs marks disconnected nodes unreachable") {
  const Graph g = build_graph({{0, 1}, {1, 2}}, 4);
  const auto d = bfs_distance_to_set(g, {0});
  CHECK(!d[3].has_value());
  CHECK_THROWS_AS(bfs_distance_to_set(g, {}), EmptySourceSet);
}

TEST_CASE("bfs matches the brute-force oracle on random graphs") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(49));
    const Graph g = random_graph(rng, n, 0.08);
    std::vector<int> sources;
    const int num_sources = 1 + static_cast<int>(rng.next_below(3));
    for (int s = 0; s < num_sources; ++s) sources.push_back(static_cast<int>(rng.next_below(n)));
    const auto got = bfs_distance_to_set(g, sources);
    const auto want = bfs_oracle(g, sources);
    for (int i = 0; i < n; ++i) {
      CHECK(got[i].has_value() == want[i].has_value());
      if (got[i]) CHECK(*got[i] == *want[i]);
    }
  }
}

TEST_CASE("node homophily follows the smoothed log ratio") {
  // Node 0 isolated; node 1 with 3 agreeing, 1 disagreeing; node with only
  // disagreeing neighbors goes negative.
  const Graph star = build_graph({{1, 2}, {1, 3}, {1, 4}, {1, 5}}, 6);
  const std::vector<int> labels = {0, 0, 0, 0, 0, 1};
  const auto h = node_homophily(star, labels);
  CHECK(h[0] == doctest::Approx(0.0));
  CHECK(h[1] == doctest::Approx(std::log(2.0)));  // (3+1)/(1+1)

  const Graph tri = build_graph({{0, 1}, {0, 2}, {0, 3}}, 4);
  const std::vector<int> tri_labels = {0, 1, 1, 1};
  CHECK(node_homophily(tri, tri_labels)[0] == doctest::Approx(std::log(0.25)));
}

TEST_CASE("node homophily is invariant to consistent label permutation") {
  Rng rng(37);
  const Graph g = random_graph(rng, 25, 0.2);
  std::vector<int> labels(25), permuted(25);
  const std::vector<int> perm = {2, 0, 1};
  for (int i = 0; i < 25; ++i) {
    labels[i] = static_cast<int>(rng.next_below(3));
    permuted[i] = perm[labels[i]];
  }
  const auto a = node_homophily(g, labels);
  const auto b = node_homophily(g, permuted);
  for (int i = 0; i < 25; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("homophily index on small cases") {
  CHECK(homophily_index(build_graph({{0, 1}}, 2), {1, 1}) == doctest::Approx(1.0));
  // Triangle with labels (A, A, B): fractions 1/2, 1/2, 0.
  const Graph tri = build_graph({{0, 1}, {1, 2}, {0, 2}}, 3);
  CHECK(homophily_index(tri, {0, 0, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(homophily_index(build_graph({}, 3), {0, 1, 2}) == doctest::Approx(0.0));
}

TEST_CASE("homophily index is 1 for uniform labels with no isolated nodes") {
  Rng rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(20));
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);  // cycle: degree >= 1
    for (int e = 0; e < n; ++e) {
      edges.emplace_back(static_cast<int>(rng.next_below(n)), static_cast<int>(rng.next_below(n)));
    }
    std::vector<std::pair<int, int>> clean;
    for (auto [a, b] : edges) {
      if (a != b) clean.emplace_back(a, b);
    }
    const Graph g = build_graph(clean, n);
    CHECK(homophily_index(g, std::vector<int>(n, 4)) == doctest::Approx(1.0));
  }
}

TEST_CASE("neighbors_with_self inserts the node in order") {
  const Graph path = build_graph({{0, 1}, {1, 2}}, 3);
  CHECK(neighbors_with_self(path, 1) == std::vector<int>{0, 1, 2});
  CHECK(neighbors_with_self(path, 0) == std::vector<int>{0, 1});
  const Graph lonely = build_graph({}, 1);
  CHECK(neighbors_with_self(lonely, 0) == std::vector<int>{0});
}

TEST_CASE("train_neighbor_set excludes train nodes themselves") {
  const Graph g = build_graph({{0, 1}, {1, 2}, {2, 3}}, 5);
  CHECK(train_neighbor_set(g, {1}) == std::vector<int>{0, 2});
  CHECK(train_neighbor_set(g, {0, 1}) == std::vector<int>{2});
  CHECK(train_neighbor_set(g, {4}) == std::vector<int>{});
}

TEST_CASE("edge files round-trip and tolerate comments") {
  const std::string path = "/tmp/gcalib_test_edges.txt";
  const Graph g = build_graph({{0, 1}, {1, 2}, {0, 3}}, 4);
  write_edge_file(path, g);
  const Graph back = read_edge_file(path, 4);
  CHECK(back.row_offsets == g.row_offsets);
  CHECK(back.col_indices == g.col_indices);

  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("# comment\n\n0 1\n1 0\n2 2\n", f);
    std::fclose(f);
  }
  const Graph messy = read_edge_file(path, 3);
  CHECK(messy.num_undirected_edges() == 1);

  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("0 9\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_edge_file(path, 3), InvalidEdge);
}
