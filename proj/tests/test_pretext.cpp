#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <map>
#include <set>

#include "agssl/pretext.hpp"
#include "helpers.hpp"

using namespace agssl;

namespace {

// Three tight, far-apart feature blobs on an edgeless graph.
Graph blob_graph(std::uint64_t seed, std::vector<int>& truth) {
  Rng rng(seed);
  const NodeId n = 60;
  Matrix x(60, 2);
  truth.assign(60, 0);
  for (NodeId i = 0; i < n; ++i) {
    const int b = i % 3;
    truth[i] = b;
    x(i, 0) = 20.0 * b + 0.1 * rng.normal();
    x(i, 1) = -15.0 * b + 0.1 * rng.normal();
  }
  return Graph(n, {}, std::move(x), truth, 3, testutil::simple_splits(n));
}

// Checks the SSL gradient of `task` against finite differences.
double ssl_grad_error(const Graph& g, const PretextTask& task, std::uint64_t seed) {
  const Graph pg = propagation_graph(g, task);
  const auto adj = normalized_adjacency(pg);
  Rng rng(seed);
  GcnEncoder enc = GcnEncoder::glorot(g.feature_dim(), 5, 1, rng);
  const bool has_head = task.head_dim() > 0;
  Linear head = has_head ? Linear::glorot(5, task.head_dim(), rng) : Linear{};
  for (double& v : head.bias.values()) v = 0.1 * rng.normal();
  const std::uint64_t step_seed = 99;

  auto loss = [&] {
    GcnCache c;
    const Matrix h = gcn_forward(adj, g.features(), enc, &c);
    return ssl_loss_and_grad(task, adj, g.features(), enc, c, h, head, step_seed).loss;
  };
  GcnCache cache;
  const Matrix h = gcn_forward(adj, g.features(), enc, &cache);
  auto grad = ssl_loss_and_grad(task, adj, g.features(), enc, cache, h, head, step_seed);
  std::vector<Matrix*> params = enc.parameters();
  std::vector<Matrix> analytic = grad.d_encoder;
  if (has_head) {
    params.push_back(&head.weight);
    params.push_back(&head.bias);
    analytic.push_back(grad.head.weight);
    analytic.push_back(grad.head.bias);
  }
  return grad_check(loss, params, analytic);
}

std::set<std::set<NodeId>> parts_of(const std::vector<int>& labels) {
  std::map<int, std::set<NodeId>> m;
  for (std::size_t i = 0; i < labels.size(); ++i) m[labels[i]].insert(static_cast<NodeId>(i));
  std::set<std::set<NodeId>> out;
  for (auto& [k, v] : m) out.insert(v);
  return out;
}

}  // namespace

TEST_SUITE("pretext") {
  TEST_CASE("task names round-trip") {
    for (TaskKind k : kTaskPool) CHECK(parse_task_kind(to_string(k)) == k);
    CHECK(parse_task_kind("PairDis") == TaskKind::PairDis);
    CHECK_THROWS(parse_task_kind("foo"));
    CHECK(task_index(TaskKind::Dgi) == 2);
  }

  TEST_CASE("CLU recovers separated blobs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::vector<int> truth;
      const Graph g = blob_graph(seed, truth);
      const auto pl = build_clu_targets(g, 3, seed);
      CHECK(pl.n_classes == 3);
      CHECK(testutil::adjusted_rand_index(pl.labels, truth) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("CLU terminates on identical features and is deterministic") {
    const Graph g(10, {}, Matrix(10, 3, 1.0), std::vector<int>(10, 0), 1, testutil::simple_splits(10));
    const auto a = build_clu_targets(g, 4, 1);
    CHECK(a.labels.size() == 10);
    std::vector<int> truth;
    const Graph b = blob_graph(3, truth);
    CHECK(build_clu_targets(b, 5, 7).labels == build_clu_targets(b, 5, 7).labels);
  }

  TEST_CASE("PAR bisects a path in the middle") {
    const Graph g = testutil::make_graph(4, testutil::path_edges(4), 2, 2, 0);
    const auto pl = build_par_targets(g, 2, 0);
    CHECK(parts_of(pl.labels) == std::set<std::set<NodeId>>{{0, 1}, {2, 3}});
  }

  TEST_CASE("PAR separates two cliques joined by one edge") {
    std::vector<Edge> e;
    for (NodeId u = 0; u < 6; ++u)
      for (NodeId v = u + 1; v < 6; ++v) {
        e.push_back({u, v});
        e.push_back({u + 6, v + 6});
      }
    e.push_back({5, 6});
    const Graph g = testutil::make_graph(12, e, 2, 2, 0);
    const auto pl = build_par_targets(g, 2, 0);
    CHECK(parts_of(pl.labels) == std::set<std::set<NodeId>>{{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9, 10, 11}});
  }

  TEST_CASE("PAR parts are balanced and cover components") {
    Rng rng(4);
    auto edges = testutil::random_edges(64, 0.05, rng);
    for (const auto& e : testutil::path_edges(64)) edges.push_back(e);
    const Graph g = testutil::make_graph(64, edges, 2, 2, 0);
    const auto pl = build_par_targets(g, 8, 0);
    std::map<int, int> sizes;
    for (int l : pl.labels) ++sizes[l];
    CHECK(pl.n_classes == static_cast<int>(sizes.size()));
    for (auto& [k, s] : sizes) CHECK(s == 8);
    // more components than parts: everything still gets a label
    const Graph sparse = testutil::make_graph(20, {{0, 1}}, 2, 2, 0);
    const auto ps = build_par_targets(sparse, 3, 0);
    CHECK(ps.n_classes <= 3);
    CHECK_THROWS(build_par_targets(sparse, 1, 0));
  }

  TEST_CASE("desk-scale partition count") {
    CHECK(desk_scale_parts(400, 200) == 40);
    CHECK(desk_scale_parts(10, 200) == 10);
    CHECK(desk_scale_parts(400, 5) == 2);
  }

  TEST_CASE("PAIRDIS class boundaries") {
    CHECK(pairdis_class(1) == 0);
    CHECK(pairdis_class(2) == 1);
    CHECK(pairdis_class(3) == 2);
    CHECK(pairdis_class(std::nullopt) == 3);
    CHECK_THROWS(pairdis_class(0));
  }

  TEST_CASE("PAIRDIS samples are distinct and match Floyd-Warshall") {
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
      const Graph g = testutil::make_graph(40, testutil::random_edges(40, 0.05, rng), 2, 2, 0);
      const auto fw = testutil::floyd_warshall(g);
      const auto pairs = build_pairdis_targets(g, 200, trial);
      CHECK(pairs.size() == 200);
      std::set<std::pair<NodeId, NodeId>> seen;
      for (const auto& p : pairs) {
        CHECK(p.i < p.j);
        CHECK(seen.insert({p.i, p.j}).second);
        const int d = fw[p.i][p.j];
        CHECK(p.target == (d < 0 || d >= 4 ? 3 : d - 1));
      }
    }
  }

  TEST_CASE("PAIRSIM masks edges and samples non-edges") {
    Rng rng(2);
    const Graph g = testutil::make_graph(30, testutil::random_edges(30, 0.2, rng), 2, 2, 0);
    const auto t = build_pairsim_targets(g, 10, 5);
    CHECK(t.positive.size() == 10);
    CHECK(t.negative.size() == 10);
    CHECK_FALSE(t.clamped);
    for (const auto& p : t.positive) CHECK((g.has_edge(p.i, p.j) && p.target == 1));
    for (const auto& p : t.negative) CHECK((!g.has_edge(p.i, p.j) && p.i != p.j && p.target == 0));
    PretextTask task{TaskKind::PairSim, 5, t};
    const Graph pg = propagation_graph(g, task);
    CHECK(pg.num_edges() == g.num_edges() - 10);
    for (const auto& p : t.positive) CHECK_FALSE(pg.has_edge(p.i, p.j));
  }

  TEST_CASE("PAIRSIM clamps m and fails on complete graphs") {
    const Graph path = testutil::make_graph(6, testutil::path_edges(6), 2, 2, 0);
    const auto t = build_pairsim_targets(path, 50, 0);
    CHECK(t.clamped);
    CHECK(t.positive.size() == 5);
    std::vector<Edge> k4;
    for (NodeId u = 0; u < 4; ++u)
      for (NodeId v = u + 1; v < 4; ++v) k4.push_back({u, v});
    const Graph complete = testutil::make_graph(4, k4, 2, 2, 0);
    CHECK_THROWS_AS(build_pairsim_targets(complete, 2, 0), std::runtime_error);
  }

  TEST_CASE("DGI loss on indistinguishable nodes is log(1 + negatives)") {
    const NodeId n = 10;
    Rng rng(1);
    const Graph g(n, testutil::random_edges(n, 0.3, rng), Matrix(10, 3, 0.7), std::vector<int>(10, 0), 1,
                  testutil::simple_splits(n));
    const auto adj = normalized_adjacency(g);
    // self-loop normalization gives identical rows only for regular graphs; use no edges
    const Graph flat(n, {}, Matrix(10, 3, 0.7), std::vector<int>(10, 0), 1, testutil::simple_splits(n));
    const GcnEncoder enc = GcnEncoder::glorot(3, 4, 1, rng);
    const auto full = dgi_loss(normalized_adjacency(flat), flat.features(), enc, 3);
    CHECK(full.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    const auto few = dgi_loss(normalized_adjacency(flat), flat.features(), enc, 3, {.n_sample = 5, .n_negatives = 4});
    CHECK(few.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(dgi_loss(adj, g.features(), enc, 3).loss > 0.0);
  }

  TEST_CASE("gradient check: all five pretext losses on 8 nodes") {
    Rng rng(21);
    std::vector<Edge> edges = testutil::path_edges(8);
    edges.push_back({0, 4});
    edges.push_back({2, 6});
    const Graph g = testutil::make_graph(8, edges, 4, 2, 3);
    PretextConfig cfg;
    cfg.clu_clusters = 3;
    cfg.par_parts = 2;
    cfg.pairdis_pairs = 10;
    cfg.pairsim_edges = 3;
    cfg.dgi = {.n_sample = 8, .n_negatives = 4};
    for (TaskKind k : kTaskPool) {
      CAPTURE(to_string(k));
      const PretextTask task = build_task(g, k, cfg, 17);
      CHECK(ssl_grad_error(g, task, 5) < 1e-4);
    }
  }

  TEST_CASE("task JSON round-trip") {
    Rng rng(6);
    const Graph g = testutil::make_graph(30, testutil::random_edges(30, 0.15, rng), 3, 2, 1);
    PretextConfig cfg;
    cfg.clu_clusters = 4;
    cfg.pairdis_pairs = 20;
    cfg.pairsim_edges = 5;
    for (TaskKind k : kTaskPool) {
      const PretextTask task = build_task(g, k, cfg, 4);
      const PretextTask back = task_from_json(nlohmann::json::parse(task_to_json(task).dump()));
      CHECK(back.kind == task.kind);
      CHECK(back.seed == task.seed);
      CHECK(back.head_dim() == task.head_dim());
      CHECK(task_to_json(back) == task_to_json(task));
    }
  }

  TEST_CASE("targets are a pure function of graph and seed") {
    Rng rng(7);
    const Graph g = testutil::make_graph(30, testutil::random_edges(30, 0.15, rng), 3, 2, 1);
    PretextConfig cfg;
    cfg.pairdis_pairs = 20;
    cfg.pairsim_edges = 5;
    for (TaskKind k : kTaskPool)
      CHECK(task_to_json(build_task(g, k, cfg, 9)) == task_to_json(build_task(g, k, cfg, 9)));
  }
}
