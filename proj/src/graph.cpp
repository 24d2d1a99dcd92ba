#include "agssl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "agssl/io.hpp"
#include "agssl/rng.hpp"

namespace agssl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_node(NodeId v, NodeId n) {
  if (v < 0 || v >= n) throw std::invalid_argument("node index out of range: " + std::to_string(v));
}

void check_split(const std::vector<NodeId>& split, NodeId n, std::vector<char>& seen, const char* name) {
  for (NodeId v : split) {
    check_node(v, n);
    if (seen[v]) throw std::invalid_argument(std::string("splits overlap at node ") + std::to_string(v) + " (" + name + ")");
    seen[v] = 1;
  }
}

}  // namespace

Graph::Graph(NodeId n_nodes, std::span<const Edge> edges, Matrix features, std::vector<int> labels, int n_classes,
             Splits splits, std::size_t* dropped_self_loops)
    : n_nodes_(n_nodes), features_(std::move(features)), labels_(std::move(labels)), n_classes_(n_classes),
      splits_(std::move(splits)) {
  if (n_nodes < 0) throw std::invalid_argument("negative node count");
  if (features_.rows() != static_cast<std::size_t>(n_nodes))
    throw std::invalid_argument("feature row count " + std::to_string(features_.rows()) + " != N " +
                                std::to_string(n_nodes));
  if (labels_.size() != static_cast<std::size_t>(n_nodes))
    throw std::invalid_argument("label count " + std::to_string(labels_.size()) + " != N " + std::to_string(n_nodes));
  if (n_classes_ < 1) throw std::invalid_argument("n_classes must be positive");
  for (int y : labels_)
    if (y < 0 || y >= n_classes_) throw std::invalid_argument("label out of range: " + std::to_string(y));
  if (!all_finite(features_)) throw std::invalid_argument("non-finite feature value");

  std::vector<std::pair<NodeId, NodeId>> directed;
  directed.reserve(edges.size() * 2);
  std::size_t self_loops = 0;
  for (const Edge& e : edges) {
    check_node(e.u, n_nodes);
    check_node(e.v, n_nodes);
    if (e.u == e.v) {
      ++self_loops;
      continue;
    }
    directed.emplace_back(e.u, e.v);
    directed.emplace_back(e.v, e.u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  if (dropped_self_loops) *dropped_self_loops = self_loops;

  row_ptr_.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
  col_idx_.reserve(directed.size());
  for (const auto& [u, v] : directed) {
    ++row_ptr_[u + 1];
    col_idx_.push_back(v);
  }
  for (NodeId i = 0; i < n_nodes; ++i) row_ptr_[i + 1] += row_ptr_[i];

  std::vector<char> seen(static_cast<std::size_t>(n_nodes), 0);
  check_split(splits_.train, n_nodes, seen, "train");
  check_split(splits_.val, n_nodes, seen, "val");
  check_split(splits_.test, n_nodes, seen, "test");
  if (splits_.train.empty()) throw std::invalid_argument("train split is empty");
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < n_nodes_; ++u)
    for (NodeId v : neighbors(u))
      if (u < v) out.push_back({u, v});
  return out;
}

Graph Graph::without_edges(std::span<const Edge> removed) const {
  std::vector<Edge> drop;
  drop.reserve(removed.size());
  for (const Edge& e : removed) drop.push_back({std::min(e.u, e.v), std::max(e.u, e.v)});
  auto key = [](const Edge& e) { return std::pair{e.u, e.v}; };
  std::sort(drop.begin(), drop.end(), [&](const Edge& a, const Edge& b) { return key(a) < key(b); });
  std::vector<Edge> kept;
  for (const Edge& e : edge_list()) {
    if (!std::binary_search(drop.begin(), drop.end(), e, [&](const Edge& a, const Edge& b) { return key(a) < key(b); }))
      kept.push_back(e);
  }
  return Graph(n_nodes_, kept, features_, labels_, n_classes_, splits_);
}

Matrix NormalizedAdjacency::multiply(const Matrix& x) const {
  if (x.rows() != static_cast<std::size_t>(n)) throw std::invalid_argument("adjacency multiply: row mismatch");
  Matrix out(x.rows(), x.cols());
  for (NodeId i = 0; i < n; ++i) {
    auto dst = out.row(static_cast<std::size_t>(i));
    for (auto p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      const double w = values[p];
      auto src = x.row(static_cast<std::size_t>(col_idx[p]));
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

Matrix NormalizedAdjacency::to_dense() const {
  Matrix out(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i)
    for (auto p = row_ptr[i]; p < row_ptr[i + 1]; ++p) out(i, col_idx[p]) = values[p];
  return out;
}

NormalizedAdjacency normalized_adjacency(const Graph& g) {
  const NodeId n = g.num_nodes();
  NormalizedAdjacency adj;
  adj.n = n;
  adj.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  adj.col_idx.reserve(g.col_idx().size() + static_cast<std::size_t>(n));
  adj.values.reserve(adj.col_idx.capacity());
  std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  for (NodeId i = 0; i < n; ++i) {
    bool self_done = false;
    auto emit = [&](NodeId j) {
      adj.col_idx.push_back(j);
      adj.values.push_back(inv_sqrt[i] * inv_sqrt[j]);
    };
    for (NodeId j : g.neighbors(i)) {
      if (!self_done && j > i) {
        emit(i);
        self_done = true;
      }
      emit(j);
    }
    if (!self_done) emit(i);
    adj.row_ptr[i + 1] = static_cast<std::int64_t>(adj.col_idx.size());
  }
  return adj;
}

std::vector<int> bfs_distances(const Graph& g, NodeId source, int cap) {
  check_node(source, g.num_nodes());
  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::deque<NodeId> frontier{source};
  dist[source] = 0;
  while (!frontier.empty()) {
    const NodeId u = frontier.front();
    frontier.pop_front();
    if (dist[u] >= cap) continue;
    for (NodeId v : g.neighbors(u)) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

std::optional<int> bfs_path_length(const Graph& g, NodeId source, NodeId target, int cap) {
  check_node(target, g.num_nodes());
  if (cap < 1) throw std::invalid_argument("bfs cap must be >= 1");
  if (source == target) return 0;
  const auto dist = bfs_distances(g, source, cap);
  if (dist[target] < 0) return std::nullopt;
  return dist[target];
}

std::vector<std::size_t> degree_buckets(const Graph& g, std::span<const std::size_t> boundaries) {
  if (boundaries.empty()) throw std::invalid_argument("degree boundaries must be non-empty");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1]) throw std::invalid_argument("degree boundaries must be strictly increasing");
  std::vector<std::size_t> bucket(static_cast<std::size_t>(g.num_nodes()));
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), g.degree(i));
    const auto pos = static_cast<std::size_t>(it - boundaries.begin());
    bucket[i] = pos == 0 ? 0 : pos - 1;
  }
  return bucket;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

LoadedGraph load_graph(const fs::path& dir, std::optional<int> n_classes) {
  for (const char* name : {"graph.edges", "features.csv", "labels.csv", "splits.json"})
    if (!fs::exists(dir / name)) throw std::runtime_error("missing file: " + (dir / name).string());

  std::vector<int> labels;
  for (const auto& line : io::read_lines(dir / "labels.csv")) {
    if (io::trim(line).empty()) continue;
    labels.push_back(static_cast<int>(io::parse_int(line)));
  }
  const auto n = static_cast<NodeId>(labels.size());

  std::vector<std::vector<double>> rows;
  for (const auto& line : io::read_lines(dir / "features.csv")) {
    if (io::trim(line).empty()) continue;
    std::vector<double> r;
    for (auto cell : io::split(line, ',')) r.push_back(io::parse_double(cell));
    if (!rows.empty() && r.size() != rows.front().size()) throw std::runtime_error("ragged features.csv");
    rows.push_back(std::move(r));
  }
  if (rows.size() != labels.size())
    throw std::runtime_error("feature row count " + std::to_string(rows.size()) + " != N " + std::to_string(n));
  Matrix features(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), features.row(i).begin());

  std::vector<Edge> edges;
  for (const auto& line : io::read_lines(dir / "graph.edges")) {
    const auto t = io::trim(line);
    if (t.empty()) continue;
    const auto ws = t.find_first_of(" \t");
    if (ws == std::string_view::npos) throw std::runtime_error("malformed edge line: '" + std::string(t) + "'");
    const auto a = io::parse_int(t.substr(0, ws));
    const auto b = io::parse_int(t.substr(ws));
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::runtime_error("index out of range in graph.edges: '" + std::string(t) + "'");
    edges.push_back({static_cast<NodeId>(a), static_cast<NodeId>(b)});
  }

  const json sj = json::parse(io::read_file(dir / "splits.json"));
  Splits splits;
  for (auto [key, dst] : {std::pair{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}) {
    if (!sj.contains(key)) throw std::runtime_error(std::string("splits.json lacks key '") + key + "'");
    for (const auto& v : sj.at(key)) {
      const auto idx = v.get<long long>();
      if (idx < 0 || idx >= n) throw std::runtime_error("index out of range in splits.json: " + std::to_string(idx));
      dst->push_back(static_cast<NodeId>(idx));
    }
  }

  int classes = 0;
  if (n_classes) {
    classes = *n_classes;
  } else if (sj.contains("n_classes")) {
    classes = sj.at("n_classes").get<int>();
  } else {
    for (int y : labels) classes = std::max(classes, y + 1);
  }
  for (int y : labels)
    if (y < 0 || y >= classes) throw std::runtime_error("label out of range: " + std::to_string(y));

  LoadedGraph out;
  out.graph = Graph(n, edges, std::move(features), std::move(labels), classes, std::move(splits), &out.dropped_self_loops);
  return out;
}

void save_graph(const Graph& g, const fs::path& dir) {
  fs::create_directories(dir);
  std::string edges;
  for (const Edge& e : g.edge_list()) edges += std::to_string(e.u) + " " + std::to_string(e.v) + "\n";
  io::write_file_atomic(dir / "graph.edges", edges);

  std::string feats;
  const Matrix& x = g.features();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (j) feats += ',';
      feats += io::format_double(x(i, j));
    }
    feats += '\n';
  }
  io::write_file_atomic(dir / "features.csv", feats);

  std::string labels;
  for (int y : g.labels()) labels += std::to_string(y) + "\n";
  io::write_file_atomic(dir / "labels.csv", labels);

  json sj;
  sj["train"] = g.splits().train;
  sj["val"] = g.splits().val;
  sj["test"] = g.splits().test;
  sj["n_classes"] = g.num_classes();
  io::write_file_atomic(dir / "splits.json", sj.dump() + "\n");
}

// ---------------------------------------------------------------------------
// SBM
// ---------------------------------------------------------------------------

int SbmSpec::num_classes() const {
  int c = 0;
  for (const auto& b : blocks) c = std::max(c, b.label + 1);
  return c;
}

std::size_t SbmSpec::num_nodes() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size;
  return n;
}

void SbmSpec::validate() const {
  if (blocks.empty()) throw std::invalid_argument("SBM needs at least one block");
  for (const auto& b : blocks) {
    if (b.size < 1) throw std::invalid_argument("SBM block sizes must be >= 1");
    if (b.label < 0) throw std::invalid_argument("SBM block labels must be >= 0");
  }
  if (!(p_in >= 0.0 && p_in <= 1.0)) throw std::invalid_argument("p_in must lie in [0,1]");
  if (!(p_out >= 0.0 && p_out <= 1.0)) throw std::invalid_argument("p_out must lie in [0,1]");
  if (p_out > p_in) throw std::invalid_argument("p_out must not exceed p_in");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and >= 0");
  if (class_means.rows() < static_cast<std::size_t>(num_classes()))
    throw std::invalid_argument("class_means needs one row per class");
  if (!(train_rate >= 0.0 && val_rate >= 0.0 && train_rate + val_rate <= 1.0))
    throw std::invalid_argument("split rates must be non-negative and sum to at most 1");
  if (num_nodes() > static_cast<std::size_t>(std::numeric_limits<NodeId>::max()))
    throw std::invalid_argument("SBM too large");
}

Matrix axis_class_means(int n_classes, std::size_t dim, double scale) {
  if (dim == 0) throw std::invalid_argument("feature dim must be positive");
  Matrix means(static_cast<std::size_t>(n_classes), dim);
  for (int c = 0; c < n_classes; ++c) means(c, static_cast<std::size_t>(c) % dim) = scale;
  return means;
}

Graph gen_sbm(const SbmSpec& spec) {
  spec.validate();
  const auto n = static_cast<NodeId>(spec.num_nodes());
  std::vector<std::size_t> block_of(static_cast<std::size_t>(n));
  std::vector<int> labels(static_cast<std::size_t>(n));
  {
    std::size_t v = 0;
    for (std::size_t b = 0; b < spec.blocks.size(); ++b)
      for (std::size_t k = 0; k < spec.blocks[b].size; ++k, ++v) {
        block_of[v] = b;
        labels[v] = spec.blocks[b].label;
      }
  }

  std::vector<Edge> edges;
  Rng edge_rng(derive_seed(spec.seed, {stream::kGraphEdges}));
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) {
      const double p = block_of[u] == block_of[v] ? spec.p_in : spec.p_out;
      if (edge_rng.uniform() < p) edges.push_back({u, v});
    }

  const std::size_t d = spec.class_means.cols();
  Matrix features(static_cast<std::size_t>(n), d);
  Rng feat_rng(derive_seed(spec.seed, {stream::kGraphFeatures}));
  for (NodeId v = 0; v < n; ++v)
    for (std::size_t j = 0; j < d; ++j)
      features(v, j) = spec.class_means(labels[v], j) + spec.sigma * feat_rng.normal();

  std::vector<NodeId> order(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) order[v] = v;
  Rng split_rng(derive_seed(spec.seed, {stream::kGraphSplits}));
  split_rng.shuffle(std::span<NodeId>(order));
  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.train_rate * n)));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(spec.val_rate * n)));
  Splits splits;
  splits.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  splits.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                    order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  splits.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.val.begin(), splits.val.end());
  std::sort(splits.test.begin(), splits.test.end());

  return Graph(n, edges, std::move(features), std::move(labels), spec.num_classes(), std::move(splits));
}

Matrix sbm_feature_posterior(const SbmSpec& spec, const Matrix& features) {
  spec.validate();
  if (spec.sigma <= 0.0) throw std::invalid_argument("posterior needs sigma > 0");
  const int c_count = spec.num_classes();
  if (features.cols() != spec.class_means.cols()) throw std::invalid_argument("feature dim mismatch");
  std::vector<double> log_prior(static_cast<std::size_t>(c_count), -std::numeric_limits<double>::infinity());
  {
    std::vector<double> mass(static_cast<std::size_t>(c_count), 0.0);
    for (const auto& b : spec.blocks) mass[b.label] += static_cast<double>(b.size);
    for (int c = 0; c < c_count; ++c)
      if (mass[c] > 0) log_prior[c] = std::log(mass[c] / static_cast<double>(spec.num_nodes()));
  }
  Matrix post(features.rows(), static_cast<std::size_t>(c_count));
  const double inv_two_var = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < c_count; ++c) {
      double sq = 0.0;
      for (std::size_t j = 0; j < features.cols(); ++j) {
        const double diff = features(i, j) - spec.class_means(c, j);
        sq += diff * diff;
      }
      post(i, c) = log_prior[c] - sq * inv_two_var;
      best = std::max(best, post(i, c));
    }
    double total = 0.0;
    for (int c = 0; c < c_count; ++c) total += post(i, c) = std::exp(post(i, c) - best);
    for (int c = 0; c < c_count; ++c) post(i, c) /= total;
  }
  return post;
}

}  // namespace agssl
