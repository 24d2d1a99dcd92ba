#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <string_view>
#include <variant>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/nn.hpp"

namespace agssl {

enum class TaskKind { Par, Clu, Dgi, PairDis, PairSim };

/// Canonical pool order; also the teacher-count prefix order.
inline constexpr std::array<TaskKind, 5> kTaskPool{TaskKind::Par, TaskKind::Clu, TaskKind::Dgi, TaskKind::PairDis,
                                                   TaskKind::PairSim};

std::string_view to_string(TaskKind kind);
/// Accepts "par", "clu", "dgi", "pairdis", "pairsim" (case-insensitive).
TaskKind parse_task_kind(std::string_view name);
/// Position of `kind` in kTaskPool.
std::size_t task_index(TaskKind kind);

struct PseudoLabels {
  std::vector<int> labels;
  int n_classes = 0;
};

struct PairSample {
  NodeId i = 0;
  NodeId j = 0;
  int target = 0;
  bool operator==(const PairSample&) const = default;
};

struct PairSimTargets {
  std::vector<PairSample> positive;  ///< masked existing edges, target 1
  std::vector<PairSample> negative;  ///< sampled non-edges, target 0
  bool clamped = false;              ///< m was reduced to |E|
};

struct DgiSettings {
  std::size_t n_sample = 2000;
  std::size_t n_negatives = 64;
};

struct PretextConfig {
  int clu_clusters = 10;
  int par_parts = 400;
  std::size_t pairdis_pairs = 400;
  std::size_t pairsim_edges = 400;
  DgiSettings dgi;
};

// ---------------------------------------------------------------------------
// Target construction (deterministic given graph and seed)
// ---------------------------------------------------------------------------

/// k-means++ seeding then Lloyd iterations on node features (at most 100,
/// or until the largest centroid shift drops below 1e-6). An emptied cluster
/// is reseeded at the point farthest from its own centroid.
PseudoLabels build_clu_targets(const Graph& g, int n_clusters, std::uint64_t seed);

/// Balanced partition by recursive spectral bisection. Each connected
/// component is partitioned on its own; parts are allotted to components in
/// proportion to their size.
PseudoLabels build_par_targets(const Graph& g, int n_parts, std::uint64_t seed);

/// Partition count used at desk scale: min(requested, N/5), at least 2.
int desk_scale_parts(int requested, NodeId n_nodes);

/// Distinct unordered pairs, class 0..3 for distance 1, 2, 3, >=4/unreachable.
std::vector<PairSample> build_pairdis_targets(const Graph& g, std::size_t n_pairs, std::uint64_t seed);

/// Class of a shortest-path length (nullopt = farther than 3 or unreachable).
int pairdis_class(std::optional<int> distance);

/// m masked edges and m non-edges. Throws std::runtime_error when 100·m
/// rejection draws do not yield enough non-edges.
PairSimTargets build_pairsim_targets(const Graph& g, std::size_t m, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct HeadLoss {
  double loss = 0.0;
  Matrix d_embeds;
  LinearGrad head;
};

/// Mean cross-entropy of head(embeds) against per-node pseudo-labels.
HeadLoss clu_par_loss(const Matrix& embeds, const Linear& head, std::span<const int> targets);

/// Mean cross-entropy of head(|h_i - h_j|) against the distance class.
HeadLoss pairdis_loss(const Matrix& embeds, const Linear& head, std::span<const PairSample> pairs);

/// (1/2m)·Σ BCE(σ(head(|h_i - h_j|)), target) over both pair sets.
HeadLoss pairsim_loss(const Matrix& embeds, const Linear& head, std::span<const PairSample> positive,
                      std::span<const PairSample> negative);

struct DgiLoss {
  double loss = 0.0;
  std::vector<Matrix> d_weights;
};

/// InfoNCE between node embeddings and the mean embedding of a
/// feature-row-permuted view. Anchors: min(N, n_sample) nodes; negatives:
/// up to n_negatives other nodes per anchor; score(j) = h_j · s.
DgiLoss dgi_loss(const NormalizedAdjacency& adj, const Matrix& features, const GcnEncoder& encoder,
                 std::uint64_t seed, const DgiSettings& settings = {});

// ---------------------------------------------------------------------------
// Task bundle
// ---------------------------------------------------------------------------

using TaskTargets = std::variant<PseudoLabels, DgiSettings, std::vector<PairSample>, PairSimTargets>;

struct PretextTask {
  TaskKind kind = TaskKind::Par;
  std::uint64_t seed = 0;
  TaskTargets targets;

  /// Output width of the SSL head; 0 for DGI (dot-product scorer, no head).
  std::size_t head_dim() const;
};

PretextTask build_task(const Graph& g, TaskKind kind, const PretextConfig& cfg, std::uint64_t seed);

/// The graph a teacher for this task propagates over (PAIRSIM masks M).
Graph propagation_graph(const Graph& g, const PretextTask& task);

struct SslGrad {
  double loss = 0.0;
  std::vector<Matrix> d_encoder;
  LinearGrad head;  ///< empty matrices for DGI
};

/// L_ssl and its gradient wrt encoder and SSL head. `embeds`/`cache` come
/// from gcn_forward of `encoder` over `adj`. `step_seed` drives the per-call
/// sampling of DGI.
SslGrad ssl_loss_and_grad(const PretextTask& task, const NormalizedAdjacency& adj, const Matrix& features,
                          const GcnEncoder& encoder, const GcnCache& cache, const Matrix& embeds, const Linear& head,
                          std::uint64_t step_seed);

/// {"task": kind, "seed": s, "targets": [...]}.
nlohmann::json task_to_json(const PretextTask& task);
PretextTask task_from_json(const nlohmann::json& j);

}  // namespace agssl
