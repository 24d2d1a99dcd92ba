#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/rng.hpp"
#include "agssl/tensor.hpp"

namespace testutil {

using agssl::Edge;
using agssl::Graph;
using agssl::Matrix;
using agssl::NodeId;
using agssl::Rng;
using agssl::Splits;

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal() * scale;
  return m;
}

/// Random probability rows (normalized exponentials).
inline Matrix random_simplex_rows(std::size_t r, std::size_t c, Rng& rng, double spread = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (double& v : m.row(i)) s += v = std::exp(spread * rng.normal());
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

inline Splits simple_splits(NodeId n) {
  Splits s;
  for (NodeId i = 0; i < n; ++i) (i % 4 == 0 ? s.train : i % 4 == 1 ? s.val : s.test).push_back(i);
  return s;
}

/// Graph with random features/labels over the given edges.
inline Graph make_graph(NodeId n, const std::vector<Edge>& edges, std::size_t dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = random_matrix(static_cast<std::size_t>(n), dim, rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return Graph(n, edges, std::move(x), std::move(labels), classes, simple_splits(n));
}

inline std::vector<Edge> random_edges(NodeId n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < p) edges.push_back({u, v});
  return edges;
}

inline std::vector<Edge> path_edges(NodeId n) {
  std::vector<Edge> e;
  for (NodeId i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return e;
}

/// All-pairs shortest paths; -1 for unreachable.
inline std::vector<std::vector<int>> floyd_warshall(const Graph& g) {
  const auto n = static_cast<std::size_t>(g.num_nodes());
  const int inf = 1 << 28;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (NodeId j : g.neighbors(static_cast<NodeId>(i))) d[i][static_cast<std::size_t>(j)] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  for (auto& row : d)
    for (int& v : row)
      if (v >= inf) v = -1;
  return d;
}

/// Dense Â = D^{-1/2}(A+I)D^{-1/2} built directly from an edge list.
inline Matrix dense_norm_adj(NodeId n, const std::vector<Edge>& edges) {
  const auto nn = static_cast<std::size_t>(n);
  Matrix a(nn, nn);
  for (const auto& e : edges)
    if (e.u != e.v) a(e.u, e.v) = a(e.v, e.u) = 1.0;
  for (std::size_t i = 0; i < nn; ++i) a(i, i) = 1.0;
  std::vector<double> deg(nn, 0.0);
  for (std::size_t i = 0; i < nn; ++i)
    for (std::size_t j = 0; j < nn; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < nn; ++i)
    for (std::size_t j = 0; j < nn; ++j) a(i, j) /= std::sqrt(deg[i] * deg[j]);
  return a;
}

/// Adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<double>> t(static_cast<std::size_t>(ka), std::vector<double>(static_cast<std::size_t>(kb), 0));
  for (std::size_t i = 0; i < a.size(); ++i) t[a[i]][b[i]] += 1;
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  std::vector<double> rb(static_cast<std::size_t>(kb), 0);
  for (auto& row : t) {
    double ra = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      sum_ij += c2(row[j]);
      ra += row[j];
      rb[j] += row[j];
    }
    sum_a += c2(ra);
  }
  for (double v : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
  const double max_index = (sum_a + sum_b) / 2;
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace testutil
