#include "agssl/pretext.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "agssl/rng.hpp"

namespace agssl {

using nlohmann::json;

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Par: return "par";
    case TaskKind::Clu: return "clu";
    case TaskKind::Dgi: return "dgi";
    case TaskKind::PairDis: return "pairdis";
    case TaskKind::PairSim: return "pairsim";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (TaskKind k : kTaskPool)
    if (to_string(k) == lower) return k;
  throw std::invalid_argument("unknown task kind: '" + std::string(name) + "'");
}

std::size_t task_index(TaskKind kind) {
  for (std::size_t i = 0; i < kTaskPool.size(); ++i)
    if (kTaskPool[i] == kind) return i;
  throw std::logic_error("task kind missing from pool");
}

// ---------------------------------------------------------------------------
// CLU
// ---------------------------------------------------------------------------

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(std::span<const double> x, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = sq_dist(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

PseudoLabels build_clu_targets(const Graph& g, int n_clusters, std::uint64_t seed) {
  if (n_clusters < 1) throw std::invalid_argument("n_clusters must be positive");
  const Matrix& x = g.features();
  const std::size_t n = x.rows();
  if (n == 0 || x.cols() == 0) throw std::invalid_argument("CLU needs node features");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n_clusters), n);
  Rng rng(seed);

  // k-means++ seeding
  Matrix centroids(k, x.cols());
  std::size_t first = rng.below(n);
  std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x.row(i), centroids.row(c)));
  }

  std::vector<std::size_t> assign(n);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i] = nearest(x.row(i), centroids)];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(x.row(i), centroids.row(assign[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      std::copy(x.row(far).begin(), x.row(far).end(), centroids.row(c).begin());
      --counts[assign[far]];
      assign[far] = c;
      ++counts[c];
    }
    Matrix next(k, x.cols());
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(assign[i]);
      auto src = x.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::copy(centroids.row(c).begin(), centroids.row(c).end(), next.row(c).begin());
        continue;
      }
      for (double& v : next.row(c)) v /= static_cast<double>(counts[c]);
      shift = std::max(shift, std::sqrt(sq_dist(next.row(c), centroids.row(c))));
    }
    centroids = std::move(next);
    if (shift < 1e-6) break;
  }

  PseudoLabels out;
  out.n_classes = static_cast<int>(k);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(nearest(x.row(i), centroids));
  return out;
}

// ---------------------------------------------------------------------------
// PAR
// ---------------------------------------------------------------------------

namespace {

class SpectralPartitioner {
 public:
  SpectralPartitioner(const Graph& g, std::uint64_t seed)
      : g_(g), rng_(seed), local_(static_cast<std::size_t>(g.num_nodes()), -1),
        labels_(static_cast<std::size_t>(g.num_nodes()), 0) {}

  void bisect(std::vector<NodeId> nodes, int parts) {
    const auto n = static_cast<int>(nodes.size());
    if (n == 0) return;
    if (parts <= 1 || n == 1) {
      for (NodeId v : nodes) labels_[v] = next_label_;
      ++next_label_;
      return;
    }
    if (parts >= n) {
      for (NodeId v : nodes) labels_[v] = next_label_++;
      return;
    }
    const int parts_left = (parts + 1) / 2;
    const auto n_left = static_cast<std::size_t>((static_cast<long long>(n) * parts_left + parts - 1) / parts);
    const auto f = fiedler(nodes);
    std::vector<std::size_t> order(nodes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return f[a] != f[b] ? f[a] < f[b] : nodes[a] < nodes[b];
    });
    std::vector<NodeId> left, right;
    for (std::size_t r = 0; r < order.size(); ++r) (r < n_left ? left : right).push_back(nodes[order[r]]);
    std::sort(left.begin(), left.end());
    std::sort(right.begin(), right.end());
    bisect(std::move(left), parts_left);
    bisect(std::move(right), parts - parts_left);
  }

  /// Power iteration on c·I - L over the induced subgraph, with the constant
  /// vector projected out, for 200 iterations. Oriented so that the first
  /// non-zero entry is negative.
  std::vector<double> fiedler(const std::vector<NodeId>& nodes) {
    const std::size_t n = nodes.size();
    for (std::size_t i = 0; i < n; ++i) local_[nodes[i]] = static_cast<int>(i);
    std::vector<std::vector<std::size_t>> adj(n);
    std::size_t max_deg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (NodeId v : g_.neighbors(nodes[i]))
        if (local_[v] >= 0) adj[i].push_back(static_cast<std::size_t>(local_[v]));
      max_deg = std::max(max_deg, adj[i].size());
    }
    for (NodeId v : nodes) local_[v] = -1;

    const double shift = 2.0 * static_cast<double>(max_deg) + 1.0;
    std::vector<double> x(n), y(n);
    for (double& v : x) v = rng_.uniform(-1.0, 1.0);
    auto normalize = [n](std::vector<double>& v) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
      double norm = 0.0;
      for (double& e : v) {
        e -= mean;
        norm += e * e;
      }
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (double& e : v) e /= norm;
      return norm;
    };
    normalize(x);
    for (int it = 0; it < 200; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = (shift - static_cast<double>(adj[i].size())) * x[i];
        for (std::size_t j : adj[i]) s += x[j];
        y[i] = s;
      }
      if (normalize(y) == 0.0) break;
      std::swap(x, y);
    }
    for (double v : x) {
      if (v == 0.0) continue;
      if (v > 0.0)
        for (double& e : x) e = -e;
      break;
    }
    return x;
  }

  std::vector<int> take_labels() { return std::move(labels_); }
  int used_labels() const { return next_label_; }

 private:
  const Graph& g_;
  Rng rng_;
  std::vector<int> local_;
  std::vector<int> labels_;
  int next_label_ = 0;
};

std::vector<std::vector<NodeId>> connected_components(const Graph& g) {
  std::vector<std::vector<NodeId>> comps;
  std::vector<char> seen(static_cast<std::size_t>(g.num_nodes()), 0);
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    if (seen[s]) continue;
    std::vector<NodeId> comp{s};
    seen[s] = 1;
    for (std::size_t head = 0; head < comp.size(); ++head)
      for (NodeId v : g.neighbors(comp[head]))
        if (!seen[v]) {
          seen[v] = 1;
          comp.push_back(v);
        }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

}  // namespace

PseudoLabels build_par_targets(const Graph& g, int n_parts, std::uint64_t seed) {
  if (n_parts < 2) throw std::invalid_argument("PAR needs n_parts >= 2");
  auto comps = connected_components(g);
  SpectralPartitioner part(g, seed);

  if (comps.size() <= static_cast<std::size_t>(n_parts)) {
    std::vector<int> alloc(comps.size(), 1);
    for (int extra = n_parts - static_cast<int>(comps.size()); extra > 0; --extra) {
      std::size_t best = comps.size();
      double best_ratio = 0.0;
      for (std::size_t c = 0; c < comps.size(); ++c) {
        if (static_cast<std::size_t>(alloc[c]) >= comps[c].size()) continue;
        const double ratio = static_cast<double>(comps[c].size()) / alloc[c];
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best = c;
        }
      }
      if (best == comps.size()) break;
      ++alloc[best];
    }
    for (std::size_t c = 0; c < comps.size(); ++c) part.bisect(comps[c], alloc[c]);
  } else {
    // More components than parts: pack components into bins, largest first.
    std::vector<std::size_t> order(comps.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return comps[a].size() > comps[b].size(); });
    std::vector<std::vector<NodeId>> bins(static_cast<std::size_t>(n_parts));
    for (std::size_t c : order) {
      auto lightest = std::min_element(bins.begin(), bins.end(),
                                       [](const auto& a, const auto& b) { return a.size() < b.size(); });
      lightest->insert(lightest->end(), comps[c].begin(), comps[c].end());
    }
    for (auto& bin : bins) {
      std::sort(bin.begin(), bin.end());
      part.bisect(std::move(bin), 1);
    }
  }
  PseudoLabels out;
  out.n_classes = part.used_labels();
  out.labels = part.take_labels();
  return out;
}

int desk_scale_parts(int requested, NodeId n_nodes) {
  int parts = std::min(requested, static_cast<int>(n_nodes / 5));
  parts = std::max(parts, 2);
  return std::min(parts, std::max<int>(static_cast<int>(n_nodes), 1));
}

// ---------------------------------------------------------------------------
// PAIRDIS / PAIRSIM
// ---------------------------------------------------------------------------

int pairdis_class(std::optional<int> distance) {
  if (!distance || *distance >= 4) return 3;
  if (*distance < 1) throw std::invalid_argument("pairdis_class: pair of identical nodes");
  return *distance - 1;
}

std::vector<PairSample> build_pairdis_targets(const Graph& g, std::size_t n_pairs, std::uint64_t seed) {
  const auto n = static_cast<std::uint64_t>(g.num_nodes());
  if (n < 2) throw std::invalid_argument("PAIRDIS needs at least two nodes");
  if (n_pairs < 1) throw std::invalid_argument("PAIRDIS needs n_pairs >= 1");
  n_pairs = std::min<std::uint64_t>(n_pairs, n * (n - 1) / 2);
  Rng rng(seed);
  std::set<std::pair<NodeId, NodeId>> chosen;
  std::vector<PairSample> pairs;
  pairs.reserve(n_pairs);
  while (pairs.size() < n_pairs) {
    auto a = static_cast<NodeId>(rng.below(n));
    auto b = static_cast<NodeId>(rng.below(n));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!chosen.insert({a, b}).second) continue;
    pairs.push_back({a, b, 0});
  }
  std::unordered_map<NodeId, std::vector<int>> dist_cache;
  for (auto& p : pairs) {
    auto it = dist_cache.find(p.i);
    if (it == dist_cache.end()) it = dist_cache.emplace(p.i, bfs_distances(g, p.i, 3)).first;
    const int d = it->second[p.j];
    p.target = pairdis_class(d < 0 ? std::nullopt : std::optional<int>(d));
  }
  return pairs;
}

PairSimTargets build_pairsim_targets(const Graph& g, std::size_t m, std::uint64_t seed) {
  const auto edges = g.edge_list();
  PairSimTargets out;
  if (m > edges.size()) {
    m = edges.size();
    out.clamped = true;
  }
  Rng rng(seed);
  for (std::size_t idx : rng.sample_without_replacement(edges.size(), m))
    out.positive.push_back({edges[idx].u, edges[idx].v, 1});

  const auto n = static_cast<std::uint64_t>(g.num_nodes());
  std::set<std::pair<NodeId, NodeId>> chosen;
  std::size_t draws = 0;
  while (out.negative.size() < m) {
    if (draws++ >= 100 * m)
      throw std::runtime_error("graph too dense: could not sample " + std::to_string(m) + " non-edges");
    auto a = static_cast<NodeId>(rng.below(n));
    auto b = static_cast<NodeId>(rng.below(n));
    if (a == b || g.has_edge(a, b)) continue;
    if (a > b) std::swap(a, b);
    if (!chosen.insert({a, b}).second) continue;
    out.negative.push_back({a, b, 0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

Matrix abs_diff_rows(const Matrix& h, std::span<const PairSample> pairs) {
  Matrix out(pairs.size(), h.cols());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto a = h.row(static_cast<std::size_t>(pairs[p].i));
    auto b = h.row(static_cast<std::size_t>(pairs[p].j));
    auto dst = out.row(p);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = std::abs(a[c] - b[c]);
  }
  return out;
}

/// Routes d|h_i - h_j| back to h_i and h_j.
void scatter_abs_diff(const Matrix& h, std::span<const PairSample> pairs, const Matrix& d_diff, Matrix& d_h) {
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto i = static_cast<std::size_t>(pairs[p].i);
    const auto j = static_cast<std::size_t>(pairs[p].j);
    for (std::size_t c = 0; c < h.cols(); ++c) {
      const double diff = h(i, c) - h(j, c);
      const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      d_h(i, c) += s * d_diff(p, c);
      d_h(j, c) -= s * d_diff(p, c);
    }
  }
}

}  // namespace

HeadLoss clu_par_loss(const Matrix& embeds, const Linear& head, std::span<const int> targets) {
  if (targets.size() != embeds.rows()) throw std::invalid_argument("clu_par_loss: need one target per node");
  const Matrix logits = head.forward(embeds);
  std::vector<NodeId> all(embeds.rows());
  std::iota(all.begin(), all.end(), 0);
  auto ce = softmax_cross_entropy(logits, targets, all);
  HeadLoss out;
  out.loss = ce.loss;
  out.head = linear_backward(head, embeds, ce.grad, &out.d_embeds);
  return out;
}

HeadLoss pairdis_loss(const Matrix& embeds, const Linear& head, std::span<const PairSample> pairs) {
  if (head.out_dim() != 4) throw std::invalid_argument("pairdis_loss: head must output 4 logits");
  const Matrix diff = abs_diff_rows(embeds, pairs);
  const Matrix logits = head.forward(diff);
  std::vector<int> targets(pairs.size());
  std::vector<NodeId> rows(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    targets[p] = pairs[p].target;
    rows[p] = static_cast<NodeId>(p);
  }
  auto ce = softmax_cross_entropy(logits, targets, rows);
  HeadLoss out;
  out.loss = ce.loss;
  Matrix d_diff;
  out.head = linear_backward(head, diff, ce.grad, &d_diff);
  out.d_embeds = Matrix(embeds.rows(), embeds.cols());
  scatter_abs_diff(embeds, pairs, d_diff, out.d_embeds);
  return out;
}

HeadLoss pairsim_loss(const Matrix& embeds, const Linear& head, std::span<const PairSample> positive,
                      std::span<const PairSample> negative) {
  if (head.out_dim() != 1) throw std::invalid_argument("pairsim_loss: head must output 1 logit");
  std::vector<PairSample> pairs(positive.begin(), positive.end());
  pairs.insert(pairs.end(), negative.begin(), negative.end());
  std::vector<double> targets;
  targets.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) targets.push_back(p < positive.size() ? 1.0 : 0.0);
  HeadLoss out;
  out.d_embeds = Matrix(embeds.rows(), embeds.cols());
  if (pairs.empty()) {
    out.head = LinearGrad{Matrix(head.in_dim(), 1), Matrix(1, 1)};
    return out;
  }
  const Matrix diff = abs_diff_rows(embeds, pairs);
  const Matrix logits = head.forward(diff);
  auto bce = bce_with_logits(logits, targets);
  out.loss = bce.loss;
  Matrix d_diff;
  out.head = linear_backward(head, diff, bce.grad, &d_diff);
  scatter_abs_diff(embeds, pairs, d_diff, out.d_embeds);
  return out;
}

DgiLoss dgi_loss(const NormalizedAdjacency& adj, const Matrix& features, const GcnEncoder& encoder,
                 std::uint64_t seed, const DgiSettings& settings) {
  const std::size_t n = features.rows();
  DgiLoss out;
  if (n < 2) {
    for (const auto& w : encoder.weights) out.d_weights.emplace_back(w.rows(), w.cols());
    return out;
  }
  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  Matrix shuffled(n, features.cols());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(features.row(perm[i]).begin(), features.row(perm[i]).end(), shuffled.row(i).begin());

  GcnCache clean_cache, corrupt_cache;
  const Matrix h = gcn_forward(adj, features, encoder, &clean_cache);
  const Matrix hc = gcn_forward(adj, shuffled, encoder, &corrupt_cache);
  const std::size_t f = h.cols();

  std::vector<double> summary(f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < f; ++c) summary[c] += hc(i, c);
  for (double& v : summary) v /= static_cast<double>(n);

  std::vector<double> score(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < f; ++c) s += h(j, c) * summary[c];
    score[j] = s;
  }

  const auto anchors = rng.sample_without_replacement(n, std::min(n, settings.n_sample));
  const double inv_a = 1.0 / static_cast<double>(anchors.size());
  std::vector<double> d_score(n, 0.0);
  std::vector<std::size_t> members;
  std::vector<double> weights;
  for (std::size_t i : anchors) {
    members.assign(1, i);
    if (n - 1 <= settings.n_negatives) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) members.push_back(j);
    } else {
      for (std::size_t r : rng.sample_without_replacement(n - 1, settings.n_negatives))
        members.push_back(r < i ? r : r + 1);
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t m : members) mx = std::max(mx, score[m]);
    double total = 0.0;
    weights.resize(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) total += weights[k] = std::exp(score[members[k]] - mx);
    out.loss += (std::log(total) + mx - score[i]) * inv_a;
    for (std::size_t k = 0; k < members.size(); ++k) d_score[members[k]] += weights[k] / total * inv_a;
    d_score[i] -= inv_a;
  }

  Matrix d_h(n, f);
  std::vector<double> d_summary(f, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (d_score[j] == 0.0) continue;
    for (std::size_t c = 0; c < f; ++c) {
      d_h(j, c) = d_score[j] * summary[c];
      d_summary[c] += d_score[j] * h(j, c);
    }
  }
  Matrix d_hc(n, f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < f; ++c) d_hc(i, c) = d_summary[c] / static_cast<double>(n);

  out.d_weights = gcn_backward(adj, encoder, clean_cache, d_h);
  const auto corrupt = gcn_backward(adj, encoder, corrupt_cache, d_hc);
  for (std::size_t l = 0; l < corrupt.size(); ++l) out.d_weights[l] += corrupt[l];
  return out;
}

// ---------------------------------------------------------------------------
// Task bundle
// ---------------------------------------------------------------------------

std::size_t PretextTask::head_dim() const {
  switch (kind) {
    case TaskKind::Par:
    case TaskKind::Clu: return static_cast<std::size_t>(std::get<PseudoLabels>(targets).n_classes);
    case TaskKind::Dgi: return 0;
    case TaskKind::PairDis: return 4;
    case TaskKind::PairSim: return 1;
  }
  return 0;
}

PretextTask build_task(const Graph& g, TaskKind kind, const PretextConfig& cfg, std::uint64_t seed) {
  PretextTask task;
  task.kind = kind;
  task.seed = seed;
  const std::uint64_t target_seed = derive_seed(seed, {stream::kTaskTargets});
  switch (kind) {
    case TaskKind::Par:
      task.targets = build_par_targets(g, desk_scale_parts(cfg.par_parts, g.num_nodes()), target_seed);
      break;
    case TaskKind::Clu: task.targets = build_clu_targets(g, cfg.clu_clusters, target_seed); break;
    case TaskKind::Dgi: task.targets = cfg.dgi; break;
    case TaskKind::PairDis: task.targets = build_pairdis_targets(g, cfg.pairdis_pairs, target_seed); break;
    case TaskKind::PairSim: task.targets = build_pairsim_targets(g, cfg.pairsim_edges, target_seed); break;
  }
  return task;
}

Graph propagation_graph(const Graph& g, const PretextTask& task) {
  if (task.kind != TaskKind::PairSim) return g;
  const auto& t = std::get<PairSimTargets>(task.targets);
  std::vector<Edge> masked;
  masked.reserve(t.positive.size());
  for (const auto& p : t.positive) masked.push_back({p.i, p.j});
  return g.without_edges(masked);
}

SslGrad ssl_loss_and_grad(const PretextTask& task, const NormalizedAdjacency& adj, const Matrix& features,
                          const GcnEncoder& encoder, const GcnCache& cache, const Matrix& embeds, const Linear& head,
                          std::uint64_t step_seed) {
  SslGrad out;
  if (task.kind == TaskKind::Dgi) {
    auto dgi = dgi_loss(adj, features, encoder, step_seed, std::get<DgiSettings>(task.targets));
    out.loss = dgi.loss;
    out.d_encoder = std::move(dgi.d_weights);
    return out;
  }
  HeadLoss hl;
  switch (task.kind) {
    case TaskKind::Par:
    case TaskKind::Clu: hl = clu_par_loss(embeds, head, std::get<PseudoLabels>(task.targets).labels); break;
    case TaskKind::PairDis: hl = pairdis_loss(embeds, head, std::get<std::vector<PairSample>>(task.targets)); break;
    case TaskKind::PairSim: {
      const auto& t = std::get<PairSimTargets>(task.targets);
      hl = pairsim_loss(embeds, head, t.positive, t.negative);
      break;
    }
    case TaskKind::Dgi: break;
  }
  out.loss = hl.loss;
  out.head = std::move(hl.head);
  out.d_encoder = gcn_backward(adj, encoder, cache, hl.d_embeds);
  return out;
}

json task_to_json(const PretextTask& task) {
  json j;
  j["task"] = std::string(to_string(task.kind));
  j["seed"] = task.seed;
  json targets = json::array();
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, PseudoLabels>) {
          targets = t.labels;
          j["n_classes"] = t.n_classes;
        } else if constexpr (std::is_same_v<T, DgiSettings>) {
          j["n_sample"] = t.n_sample;
          j["n_negatives"] = t.n_negatives;
        } else if constexpr (std::is_same_v<T, std::vector<PairSample>>) {
          for (const auto& p : t) targets.push_back({p.i, p.j, p.target});
        } else {
          for (const auto& p : t.positive) targets.push_back({p.i, p.j, 1});
          for (const auto& p : t.negative) targets.push_back({p.i, p.j, 0});
          j["clamped"] = t.clamped;
        }
      },
      task.targets);
  j["targets"] = std::move(targets);
  return j;
}

PretextTask task_from_json(const json& j) {
  PretextTask task;
  task.kind = parse_task_kind(j.at("task").get<std::string>());
  task.seed = j.at("seed").get<std::uint64_t>();
  const json& t = j.at("targets");
  switch (task.kind) {
    case TaskKind::Par:
    case TaskKind::Clu:
      task.targets = PseudoLabels{t.get<std::vector<int>>(), j.at("n_classes").get<int>()};
      break;
    case TaskKind::Dgi:
      task.targets = DgiSettings{j.at("n_sample").get<std::size_t>(), j.at("n_negatives").get<std::size_t>()};
      break;
    case TaskKind::PairDis: {
      std::vector<PairSample> pairs;
      for (const auto& e : t) pairs.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>(), e.at(2).get<int>()});
      task.targets = std::move(pairs);
      break;
    }
    case TaskKind::PairSim: {
      PairSimTargets ps;
      ps.clamped = j.value("clamped", false);
      for (const auto& e : t) {
        PairSample p{e.at(0).get<NodeId>(), e.at(1).get<NodeId>(), e.at(2).get<int>()};
        (p.target == 1 ? ps.positive : ps.negative).push_back(p);
      }
      task.targets = std::move(ps);
      break;
    }
  }
  return task;
}

}  // namespace agssl
