#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "agssl/tensor.hpp"

namespace agssl {

using NodeId = std::int32_t;

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  bool operator==(const Edge&) const = default;
};

struct Splits {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
  bool operator==(const Splits&) const = default;
};

/// Immutable undirected attributed graph.
///
/// Adjacency is CSR, symmetric, with strictly increasing column indices per
/// row and no self-loops. Construction symmetrizes and deduplicates the input
/// edge list and drops self-loops.
class Graph {
 public:
  Graph() = default;

  /// Throws std::invalid_argument on any invariant violation.
  /// `dropped_self_loops`, when given, receives the number of self-loop
  /// entries discarded from `edges`.
  Graph(NodeId n_nodes, std::span<const Edge> edges, Matrix features, std::vector<int> labels, int n_classes,
        Splits splits, std::size_t* dropped_self_loops = nullptr);

  NodeId num_nodes() const noexcept { return n_nodes_; }
  /// Undirected edge count.
  std::size_t num_edges() const noexcept { return col_idx_.size() / 2; }
  int num_classes() const noexcept { return n_classes_; }
  std::size_t feature_dim() const noexcept { return features_.cols(); }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {col_idx_.data() + row_ptr_[u], static_cast<std::size_t>(row_ptr_[u + 1] - row_ptr_[u])};
  }
  std::size_t degree(NodeId u) const { return static_cast<std::size_t>(row_ptr_[u + 1] - row_ptr_[u]); }
  bool has_edge(NodeId u, NodeId v) const;

  const std::vector<std::int64_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<NodeId>& col_idx() const noexcept { return col_idx_; }
  const Matrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const Splits& splits() const noexcept { return splits_; }

  /// Each undirected edge once, as (u, v) with u < v, in CSR order.
  std::vector<Edge> edge_list() const;

  /// Copy of this graph with the given undirected edges removed.
  Graph without_edges(std::span<const Edge> removed) const;

  bool operator==(const Graph&) const = default;

 private:
  NodeId n_nodes_ = 0;
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<NodeId> col_idx_;
  Matrix features_;
  std::vector<int> labels_;
  int n_classes_ = 0;
  Splits splits_;
};

/// Â = D̂^{-1/2}(A+I)D̂^{-1/2} in CSR form.
struct NormalizedAdjacency {
  NodeId n = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<NodeId> col_idx;
  std::vector<double> values;

  /// Â·x. Â is symmetric, so this is also Âᵀ·x.
  Matrix multiply(const Matrix& x) const;
  Matrix to_dense() const;
};

NormalizedAdjacency normalized_adjacency(const Graph& g);

/// Unweighted shortest-path length, or nullopt when the target is
/// unreachable or farther than `cap` hops. The search stops at depth `cap`.
std::optional<int> bfs_path_length(const Graph& g, NodeId source, NodeId target, int cap);

/// Distances from `source` up to `cap` hops; -1 beyond that or unreachable.
std::vector<int> bfs_distances(const Graph& g, NodeId source, int cap);

inline const std::vector<std::size_t> kDefaultDegreeBoundaries{1, 4, 7, 10};

/// Bucket b holds degrees in [boundaries[b], boundaries[b+1]); the last bucket
/// is open-ended and degrees below boundaries[0] go to bucket 0.
std::vector<std::size_t> degree_buckets(const Graph& g, std::span<const std::size_t> boundaries);

struct LoadedGraph {
  Graph graph;
  std::size_t dropped_self_loops = 0;
};

/// Reads graph.edges, features.csv, labels.csv and splits.json from `dir`.
/// The class count comes from `n_classes`, else from an optional
/// "n_classes" key in splits.json, else max(label)+1.
LoadedGraph load_graph(const std::filesystem::path& dir, std::optional<int> n_classes = std::nullopt);

/// Writes the four dataset files. Output is a pure function of the graph.
void save_graph(const Graph& g, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic stochastic block model
// ---------------------------------------------------------------------------

struct SbmBlock {
  std::size_t size = 0;
  int label = 0;
};

struct SbmSpec {
  std::vector<SbmBlock> blocks;
  double p_in = 0.0;
  double p_out = 0.0;
  /// C×d class means.
  Matrix class_means;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  double train_rate = 0.1;
  double val_rate = 0.1;

  int num_classes() const;
  std::size_t num_nodes() const;
  /// Throws std::invalid_argument with a readable message.
  void validate() const;
};

/// Means with `scale` on axis (c mod d) for class c, zero elsewhere.
Matrix axis_class_means(int n_classes, std::size_t dim, double scale);

Graph gen_sbm(const SbmSpec& spec);

/// Exact class posterior P(y | x) of the SBM feature model (Gaussian
/// likelihood, block-size prior). N×C.
Matrix sbm_feature_posterior(const SbmSpec& spec, const Matrix& features);

}  // namespace agssl
