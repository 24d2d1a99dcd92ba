// Acceptance suite: one PASS/FAIL/SKIP line per criterion, exit 1 on any FAIL.
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "agssl/distill.hpp"
#include "agssl/integrate.hpp"
#include "agssl/io.hpp"
#include "agssl/report.hpp"
#include "agssl/sweep.hpp"
#include "helpers.hpp"

using namespace agssl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const char* name, const char* status, const std::string& detail) {
  std::printf("[%s] C%-2d %s: %s\n", status, id, name, detail.c_str());
  std::fflush(stdout);
  if (std::string(status) == "FAIL") ++g_failures;
}

void verdict(int id, const char* name, bool ok, const std::string& detail) {
  report(id, name, ok ? "PASS" : "FAIL", detail);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 2-class, 200-node SBM; sigma calibrated so a plain GCN lands in 80-90% test accuracy.
SbmSpec calibrated_spec() {
  SbmSpec spec;
  spec.blocks = {{100, 0}, {100, 1}};
  spec.p_in = 0.2;
  spec.p_out = 0.02;
  spec.class_means = axis_class_means(2, 16, 1.0);
  spec.sigma = 1.6;
  spec.seed = 0;
  return spec;
}

bool simplex_rows_ok(const Matrix& m, double tol, double& worst) {
  bool ok = true;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0;
    for (double v : m.row(i)) {
      if (!(v >= 0.0)) ok = false;
      s += v;
    }
    worst = std::max(worst, std::abs(s - 1.0));
    if (!(std::abs(s - 1.0) <= tol)) ok = false;
  }
  return ok;
}

// ---------------------------------------------------------------------------

void c1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](const std::string& name, double err) {
    if (err > worst || worst_name.empty()) {
      worst = std::max(worst, err);
      worst_name = name;
    }
  };

  Rng rng(101);
  std::vector<Edge> edges = testutil::path_edges(8);
  edges.push_back({0, 4});
  edges.push_back({2, 6});
  edges.push_back({1, 7});
  const Graph g = testutil::make_graph(8, edges, 4, 3, 5);
  const std::vector<NodeId> all{0, 1, 2, 3, 4, 5, 6, 7};

  // GCN + CE, one and two layers
  for (std::size_t layers : {1u, 2u}) {
    const auto adj = normalized_adjacency(g);
    GcnEncoder enc = GcnEncoder::glorot(4, 6, layers, rng);
    Linear head = Linear::glorot(6, 3, rng);
    for (double& v : head.bias.values()) v = 0.1 * rng.normal();
    auto loss = [&] { return softmax_cross_entropy(head.forward(gcn_forward(adj, g.features(), enc)), g.labels(), all).loss; };
    GcnCache cache;
    const Matrix h = gcn_forward(adj, g.features(), enc, &cache);
    const auto lg = softmax_cross_entropy(head.forward(h), g.labels(), all);
    Matrix d_h;
    const auto hg = linear_backward(head, h, lg.grad, &d_h);
    auto grads = gcn_backward(adj, enc, cache, d_h);
    grads.push_back(hg.weight);
    grads.push_back(hg.bias);
    auto params = enc.parameters();
    params.push_back(&head.weight);
    params.push_back(&head.bias);
    note("gcn+ce/L" + std::to_string(layers), grad_check(loss, params, grads));
  }

  // pretext losses
  PretextConfig pc;
  pc.clu_clusters = 3;
  pc.par_parts = 2;
  pc.pairdis_pairs = 12;
  pc.pairsim_edges = 3;
  pc.dgi = {.n_sample = 8, .n_negatives = 5};
  for (TaskKind k : kTaskPool) {
    const PretextTask task = build_task(g, k, pc, 7);
    const auto adj = normalized_adjacency(propagation_graph(g, task));
    GcnEncoder enc = GcnEncoder::glorot(4, 6, 1, rng);
    Linear head = task.head_dim() ? Linear::glorot(6, task.head_dim(), rng) : Linear{};
    for (double& v : head.bias.values()) v = 0.1 * rng.normal();
    auto loss = [&] {
      GcnCache c;
      const Matrix h = gcn_forward(adj, g.features(), enc, &c);
      return ssl_loss_and_grad(task, adj, g.features(), enc, c, h, head, 3).loss;
    };
    GcnCache cache;
    const Matrix h = gcn_forward(adj, g.features(), enc, &cache);
    auto sg = ssl_loss_and_grad(task, adj, g.features(), enc, cache, h, head, 3);
    auto params = enc.parameters();
    auto grads = sg.d_encoder;
    if (task.head_dim()) {
      params.push_back(&head.weight);
      params.push_back(&head.bias);
      grads.push_back(sg.head.weight);
      grads.push_back(sg.head.bias);
    }
    note(std::string(to_string(k)), grad_check(loss, params, grads));
  }

  // KD loss
  {
    Matrix z = testutil::random_matrix(8, 3, rng, 2.0);
    const Matrix pt = testutil::random_simplex_rows(8, 3, rng);
    for (double tau : {1.0, 3.0}) {
      const auto kd = kd_loss(z, pt, tau, 0.8);
      Matrix* params[] = {&z};
      const Matrix grads[] = {kd.grad};
      note("kd", grad_check([&] { return kd_loss(z, pt, tau, 0.8).loss; }, params, grads));
    }
  }

  // L_W wrt lf and ts parameters
  {
    std::vector<Matrix> logits;
    for (int k = 0; k < 3; ++k) logits.push_back(testutil::random_matrix(8, 3, rng, 2.0));
    const auto bundle = make_bundle(logits, 1.5);
    const Matrix z = testutil::random_matrix(8, 3, rng);
    const std::vector<NodeId> train{0, 1, 2, 3, 4};
    for (auto kind : {IntegratorKind::Lf, IntegratorKind::Ts}) {
      GammaLearner gl(kind, 3, 3, 9, {});
      for (Matrix* p : gl.parameters())
        for (double& v : p->values()) v += 0.3 * rng.normal();
      std::vector<Matrix> grads;
      gl.loss_and_grad(z, bundle, g.labels(), train, &grads);
      auto loss = [&] { return lw_loss(integrate(bundle.soft, gl.weights(z, bundle)), g.labels(), train); };
      note("lw/" + std::string(to_string(kind)), grad_check(loss, gl.parameters(), grads));
    }
  }

  const double secs = seconds_since(t0);
  verdict(1, "gradient correctness", worst < 1e-4 && secs < 30.0,
          fmt("max rel err %.2e (%s), tol 1e-4; %.2f s (limit 30 s)", worst, worst_name.c_str(), secs));
}

void c2_rewriting_identity() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50), c = 2 + rng.below(8);
    const Matrix zt = testutil::random_simplex_rows(n, c, rng, 2.0);
    const Matrix pt = testutil::random_simplex_rows(n, c, rng, 2.0);
    const auto [kl, ce_h] = rewriting_identity_check(zt, pt);
    worst = std::max(worst, std::abs(kl - ce_h));
  }
  verdict(2, "KL = CE - H identity", worst <= 1e-10, fmt("max |diff| %.2e over 100 instances, tol 1e-10", worst));
}

double lattice_delta(const Matrix& rows, std::span<const double> target) {
  const std::size_t k = rows.rows();
  auto resid = [&](const std::vector<double>& l) {
    double s = 0;
    for (std::size_t c = 0; c < target.size(); ++c) {
      double v = -target[c];
      for (std::size_t t = 0; t < k; ++t) v += l[t] * rows(t, c);
      s += v * v;
    }
    return std::sqrt(s);
  };
  if (k == 1) return resid({1.0});
  double best = 1e300;
  for (int a = 0; a <= 100; ++a) {
    if (k == 2) {
      best = std::min(best, resid({a / 100.0, (100 - a) / 100.0}));
      continue;
    }
    for (int b = 0; a + b <= 100; ++b) best = std::min(best, resid({a / 100.0, b / 100.0, (100 - a - b) / 100.0}));
  }
  return best;
}

void c3_delta_monotone() {
  Rng rng(303);
  double worst_step = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng.below(6);
    const Matrix rows = testutil::random_simplex_rows(5, c, rng, 1.5);
    const Matrix target = testutil::random_simplex_rows(1, c, rng, 1.5);
    for (bool constrained : {true, false}) {
      double prev = 0;
      for (std::size_t k = 1; k <= 5; ++k) {
        Matrix prefix(k, c);
        for (std::size_t t = 0; t < k; ++t) std::copy(rows.row(t).begin(), rows.row(t).end(), prefix.row(t).begin());
        const double d = delta_k(prefix, target.row(0), constrained).delta;
        if (k > 1) worst_step = std::max(worst_step, d - prev);
        prev = d;
      }
    }
  }
  double worst_grid = 0.0, worst_above = -1e300;
  int grid_cases = 0;
  for (std::size_t k = 1; k <= 3; ++k)
    for (std::size_t c = 2; c <= 3; ++c)
      for (int trial = 0; trial < 17; ++trial) {
        const Matrix rows = testutil::random_simplex_rows(k, c, rng, 1.5);
        const Matrix target = testutil::random_simplex_rows(1, c, rng, 1.5);
        const double solver = delta_k(rows, target.row(0), true).delta;
        const double lattice = lattice_delta(rows, target.row(0));
        worst_grid = std::max(worst_grid, std::abs(solver - lattice));
        worst_above = std::max(worst_above, solver - lattice);
        ++grid_cases;
      }
  verdict(3, "delta(K) monotone + lattice oracle", worst_step <= 1e-9 && worst_grid <= 1e-3,
          fmt("max delta(K+1)-delta(K) %.2e (tol 1e-9, 100 instances, both modes); max |solver-lattice| %.2e over %d "
              "cases (tol 1e-3); max solver-lattice %.2e (solver never above the lattice when <= 0)",
              worst_step, worst_grid, grid_cases, worst_above));
}

void c4_cauchy_schwarz() {
  Rng rng(404);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(20), c = 2 + rng.below(6);
    const Matrix pt = testutil::random_simplex_rows(n, c, rng);
    const Matrix ps = testutil::random_simplex_rows(n, c, rng);
    const Matrix l = testutil::random_matrix(n, c, rng);
    const auto cs = prop1_inequality_check(pt, ps, l);
    if (cs.lhs > cs.rhs * (1 + 1e-12)) ++violations;
  }
  double worst_eq = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng.below(6);
    const Matrix pt = testutil::random_simplex_rows(1, c, rng);
    const Matrix ps = testutil::random_simplex_rows(1, c, rng);
    const Matrix l = (pt - ps) * rng.uniform(-5, 5);
    const auto cs = prop1_inequality_check(pt, ps, l);
    worst_eq = std::max(worst_eq, std::abs(cs.lhs - cs.rhs));
  }
  verdict(4, "Cauchy-Schwarz step", violations == 0 && worst_eq <= 1e-10,
          fmt("%d violations in 1000 instances; parallel single-sample |lhs-rhs| max %.2e (tol 1e-10)", violations,
              worst_eq));
}

TeacherBundle sbm_bundle(const Graph& g, std::uint64_t seed, double tau) {
  const auto teachers = train_teachers(g, kTaskPool, Strategy::JointTraining, TeacherConfig{}, seed);
  return freeze_and_export(g, teachers, tau);
}

void c5_simplex(const Graph& g) {
  const TeacherBundle bundle = sbm_bundle(g, run_seed(0, 0), 1.0);
  bool ok = true;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& soft : bundle.soft) ok &= simplex_rows_ok(soft, 1e-10, worst);
  for (auto kind : kAllIntegrators) {
    DistillConfig cfg;
    cfg.integrator = kind;
    cfg.epochs = 100;
    cfg.log_interval = 1;
    cfg.seed = 5;
    const auto run = train_student(g, bundle, cfg);
    if (run.report.weights.size() != 100) ok = false;
    for (const auto& snap : run.report.weights) {
      ok &= simplex_rows_ok(snap.weights, 1e-10, worst);
      ok &= simplex_rows_ok(integrate(bundle.soft, snap.weights), 1e-10, worst);
      checked += 2;
    }
  }
  verdict(5, "simplex invariants", ok,
          fmt("%zu weight/p^t matrices over 5 integrators x 100 epochs; max |row sum - 1| %.2e, tol 1e-10", checked,
              worst));
}

void c6_dominant_teacher(const Graph& g) {
  const std::size_t n = static_cast<std::size_t>(g.num_nodes()), c = static_cast<std::size_t>(g.num_classes());
  // teacher 1: one-hot on the true label (labeled nodes included); teacher 2: zero logits, i.e. uniform
  Matrix t1(n, c, 0.0);
  for (std::size_t i = 0; i < n; ++i) t1(i, g.labels()[i]) = 800.0;
  const TeacherBundle bundle = make_bundle({t1, Matrix(n, c, 0.0)}, 1.0);

  DistillConfig vcfg;
  vcfg.seed = 3;
  const Matrix z = student_logits(g, train_vanilla(g, vcfg).model);
  const double avg_lw = lw_loss(integrate(bundle.soft, weights_average(n, 2)), g.labels(), g.splits().train);

  bool ok = true;
  std::string detail;
  for (auto kind : {IntegratorKind::Lf, IntegratorKind::Ts}) {
    const auto res = train_gamma(kind, z, bundle, g.labels(), g.splits(), 500, DistillConfig{}.gamma_adam, 11);
    const Matrix w = res.learner.weights(z, bundle);
    double mean = 0;
    for (NodeId i : g.splits().train) mean += w(i, 0);
    mean /= static_cast<double>(g.splits().train.size());
    const double lw = lw_loss(integrate(bundle.soft, w), g.labels(), g.splits().train);
    ok &= mean >= 0.9 && lw < avg_lw;
    detail += fmt("%s: mean lambda1 %.4f (>= 0.9), L_W %.4f vs average %.4f; ", std::string(to_string(kind)).c_str(),
                  mean, lw, avg_lw);
  }
  detail += "500 steps";
  verdict(6, "dominant-teacher recovery", ok, detail);
}

void c7_mse_trend(const Graph& g) {
  DistillConfig vcfg;
  std::vector<double> vanilla;
  for (std::size_t r = 0; r < 5; ++r) {
    vcfg.seed = run_seed(0, r);
    vanilla.push_back(train_vanilla(g, vcfg).report.test_acc);
  }
  const auto vm = mean_std(vanilla);
  const bool calibrated = vm.mean >= 0.8 && vm.mean <= 0.9;

  int lf_ok = 0, ts_ok = 0;
  std::string trace;
  for (std::size_t r = 0; r < 5; ++r) {
    const std::uint64_t seed = run_seed(0, r);
    const TeacherBundle bundle = sbm_bundle(g, seed, 1.0);
    for (auto kind : {IntegratorKind::Lf, IntegratorKind::Ts}) {
      DistillConfig cfg;
      cfg.integrator = kind;
      cfg.seed = seed;
      const auto run = train_student(g, bundle, cfg);
      const double first = run.report.epochs.front().mse_train, last = run.report.epochs.back().mse_train;
      ((kind == IntegratorKind::Lf) ? lf_ok : ts_ok) += last < first;
      if (r == 0) trace += fmt(" %s %.4f->%.4f", std::string(to_string(kind)).c_str(), first, last);
    }
  }
  verdict(7, "MSE(p^t, one-hot) decreases", calibrated && lf_ok == 5 && ts_ok == 5,
          fmt("vanilla test acc %.4f (target 0.80-0.90); lf %d/5, ts %d/5 seeds with epoch-500 < epoch-1; seed 0:%s",
              vm.mean, lf_ok, ts_ok, trace.c_str()));
}

void c8_teacher_count(const Graph& g) {
  const auto t0 = std::chrono::steady_clock::now();
  TeacherCountOptions opts;
  opts.seeds = 5;
  opts.master_seed = 0;
  const auto rows = teacher_count_sweep(g, kTaskPool, opts);
  const double secs = seconds_since(t0);

  const std::size_t kmax = kTaskPool.size();
  auto mean_acc = [&](std::size_t k, IntegratorKind kind) {
    double s = 0;
    int n = 0;
    for (const auto& row : rows)
      if (row.k == k && row.integrator == kind) {
        s += row.test_acc;
        ++n;
      }
    return s / n;
  };
  std::string table = "mean test acc by K (random/average/weighted/lf/ts):";
  bool ordering = true;
  for (std::size_t k = 1; k <= kmax; ++k) {
    table += fmt(" K=%zu", k);
    for (auto kind : kAllIntegrators) table += fmt(" %.4f", mean_acc(k, kind));
    const double rnd = mean_acc(k, IntegratorKind::Random);
    ordering &= mean_acc(k, IntegratorKind::Lf) >= rnd && mean_acc(k, IntegratorKind::Ts) >= rnd;
  }
  const double lf1 = mean_acc(1, IntegratorKind::Lf), lf5 = mean_acc(kmax, IntegratorKind::Lf);
  const bool more = lf5 >= lf1 - 0.005;
  verdict(8, "more teachers help", more && ordering && secs < 600.0,
          fmt("lf K=5 %.4f vs K=1 %.4f (needs >= K1 - 0.005): %s; lf,ts >= random at every K: %s; %.1f s (limit 600 s). %s",
              lf5, lf1, more ? "yes" : "no", ordering ? "yes" : "no", secs, table.c_str()));
}

bool same_run(const Graph& g, const StudentRun& a, const StudentRun& b) {
  if (a.report.epochs.size() != b.report.epochs.size()) return false;
  for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
    const auto &x = a.report.epochs[e], &y = b.report.epochs[e];
    if (x.task_loss != y.task_loss || x.train_acc != y.train_acc || x.val_acc != y.val_acc || x.test_acc != y.test_acc)
      return false;
  }
  return student_logits(g, a.model) == student_logits(g, b.model);
}

void c9_equivalences(const Graph& g) {
  const TeacherBundle bundle = sbm_bundle(g, run_seed(0, 1), 1.0);
  int beta_ok = 0, k1_ok = 0;
  for (auto kind : kAllIntegrators) {
    DistillConfig cfg;
    cfg.integrator = kind;
    cfg.seed = 21;
    const auto vanilla = train_vanilla(g, cfg);
    cfg.beta = 0.0;
    beta_ok += same_run(g, vanilla, train_student(g, bundle, cfg));
  }
  const TeacherBundle one = bundle.prefix(1);
  DistillConfig ref_cfg;
  ref_cfg.integrator = IntegratorKind::Average;
  ref_cfg.seed = 22;
  ref_cfg.log_interval = 1;
  const auto ref = train_student(g, one, ref_cfg);
  for (auto kind : kAllIntegrators) {
    DistillConfig cfg = ref_cfg;
    cfg.integrator = kind;
    const auto run = train_student(g, one, cfg);
    bool unit = true;
    for (const auto& snap : run.report.weights) unit &= snap.weights == Matrix(snap.weights.rows(), 1, 1.0);
    k1_ok += unit && same_run(g, ref, run);
  }
  const TeacherBundle clones = make_bundle({one.logits[0], one.logits[0], one.logits[0], one.logits[0]}, 1.0);
  const bool clone_ok = same_run(g, ref, train_student(g, clones, ref_cfg));
  verdict(9, "equivalence degenerations", beta_ok == 5 && k1_ok == 5 && clone_ok,
          fmt("beta=0 == vanilla bitwise: %d/5 integrators; K=1 lambda=[1] and identical students: %d/5; average over 4 "
              "identical teachers == K=1 bitwise: %s",
              beta_ok, k1_ok, clone_ok ? "yes" : "no"));
}

void c10_pairdis() {
  Rng rng(1010);
  std::size_t pairs = 0, mismatches = 0;
  std::array<std::size_t, 4> per_class{};
  for (int trial = 0; trial < 20; ++trial) {
    const NodeId n = static_cast<NodeId>(20 + rng.below(81));
    const double p = rng.uniform(0.5, 3.0) / n;
    const Graph g = testutil::make_graph(n, testutil::random_edges(n, p, rng), 2, 2, trial);
    const auto fw = testutil::floyd_warshall(g);
    const std::size_t want = std::min<std::size_t>(400, static_cast<std::size_t>(n) * (n - 1) / 4);
    for (const auto& s : build_pairdis_targets(g, want, trial)) {
      const int d = fw[s.i][s.j];
      const int expect = d < 0 || d >= 4 ? 3 : d - 1;
      mismatches += s.target != expect;
      ++per_class[static_cast<std::size_t>(std::clamp(s.target, 0, 3))];
      ++pairs;
    }
  }
  const bool boundaries = per_class[0] > 0 && per_class[3] > 0;
  verdict(10, "PAIRDIS binning", mismatches == 0 && boundaries,
          fmt("%zu pairs on 20 graphs (N<=100), %zu mismatches; class counts d=1:%zu d=2:%zu d=3:%zu d>=4/unreachable:%zu",
              pairs, mismatches, per_class[0], per_class[1], per_class[2], per_class[3]));
}

void c11_determinism() {
  const fs::path root = fs::temp_directory_path() / "agssl_acceptance_det";
  fs::remove_all(root);
  const std::string cli = AGSSL_CLI_PATH;
  auto sh = [&](const std::string& args) {
    const std::string cmd = "'" + cli + "' " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  bool ok = true;
  std::size_t files = 0;
  std::vector<fs::path> roots{root / "a", root / "b"};
  for (const auto& r : roots) {
    const std::string d = (r / "data").string(), b = (r / "bundle").string();
    ok &= sh("gen --blocks 40x2 --p-in 0.2 --p-out 0.03 --dim 8 --sigma 1.2 --seed 4 --write-posterior --out " + d) == 0;
    ok &= sh("train-teachers --data " + d + " --out " + b + " --epochs 40 --pretrain-epochs 10 --hidden 16 --seed 5") == 0;
    ok &= sh("distill --data " + d + " --bundle " + b + " --out " + (r / "run").string() +
             " --integrator lf --epochs 30 --seeds 3 --hidden 16") == 0;
    ok &= sh("sweep --teacher-count --data " + d + " --out " + (r / "tc.csv").string() +
             " --tasks par,clu --epochs 20 --hidden 16 --seeds 2") == 0;
    const std::string grid = (r / "grid.txt").string();
    io::write_file_atomic(grid, "alpha=0.5,1\ntau=1,2\n");
    ok &= sh("sweep --grid " + grid + " --data " + d + " --out " + (r / "grid.csv").string() +
             " --tasks par --epochs 20 --hidden 16 --seeds 2") == 0;
    ok &= sh("delta --bundle " + b + " --data " + d + " --out " + (r / "delta.csv").string()) == 0;
    ok &= sh("eval --data " + d + " --bundle " + b + " --run " + (r / "run").string() + " --out " +
             (r / "eval").string()) == 0;
  }
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(roots[0])) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), roots[0]);
    ++files;
    if (!fs::exists(roots[1] / rel) || io::read_file(entry.path()) != io::read_file(roots[1] / rel)) {
      ok = false;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  verdict(11, "CLI determinism", ok && files > 0,
          fmt("%zu output files from gen/train-teachers/distill/sweep x2/delta/eval compared byte-for-byte%s%s", files,
              first_diff.empty() ? "" : "; first difference: ", first_diff.c_str()));
  fs::remove_all(root);
}

// Independent reference GCN: Eigen sparse propagation, its own init stream
// and Adam loop.
double reference_gcn_test_accuracy(const Graph& g, std::uint64_t seed) {
  using SpMat = Eigen::SparseMatrix<double>;
  using Mat = Eigen::MatrixXd;
  const Eigen::Index n = g.num_nodes(), d = static_cast<Eigen::Index>(g.feature_dim()), h = 64,
                     c = g.num_classes();
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd deg = Eigen::VectorXd::Ones(n);
  for (const auto& e : g.edge_list()) {
    deg(e.u) += 1;
    deg(e.v) += 1;
  }
  for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0 / deg(i));
  for (const auto& e : g.edge_list()) {
    const double w = 1.0 / std::sqrt(deg(e.u) * deg(e.v));
    trip.emplace_back(e.u, e.v, w);
    trip.emplace_back(e.v, e.u, w);
  }
  SpMat a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  Mat x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g.features()(i, j);
  const Mat ax = a * x;

  std::mt19937_64 gen(seed);
  auto glorot = [&](Eigen::Index r, Eigen::Index cc) {
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / (r + cc)), std::sqrt(6.0 / (r + cc)));
    Mat m(r, cc);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < cc; ++j) m(i, j) = u(gen);
    return m;
  };
  std::vector<Mat> p{glorot(d, h), glorot(h, c), Mat::Zero(1, c)};
  std::vector<Mat> m1, m2;
  for (const auto& q : p) {
    m1.push_back(Mat::Zero(q.rows(), q.cols()));
    m2.push_back(Mat::Zero(q.rows(), q.cols()));
  }
  const auto& train = g.splits().train;
  auto forward = [&](Mat& hid) {
    hid = (ax * p[0]).cwiseMax(0.0);
    Mat z = hid * p[1];
    z.rowwise() += p[2].row(0);
    return z;
  };
  auto acc_on = [&](const Mat& z, const std::vector<NodeId>& nodes) {
    int hit = 0;
    for (NodeId i : nodes) {
      Eigen::Index arg;
      z.row(i).maxCoeff(&arg);
      hit += arg == g.labels()[i];
    }
    return static_cast<double>(hit) / static_cast<double>(nodes.size());
  };
  double best_val = -1, test_at_best = 0;
  for (int t = 1; t <= 500; ++t) {
    Mat hid;
    const Mat z = forward(hid);
    const double val = acc_on(z, g.splits().val);
    if (val > best_val) {
      best_val = val;
      test_at_best = acc_on(z, g.splits().test);
    }
    Mat dz = Mat::Zero(n, c);
    for (NodeId i : train) {
      Eigen::RowVectorXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
      e /= e.sum();
      e(g.labels()[i]) -= 1.0;
      dz.row(i) = e / static_cast<double>(train.size());
    }
    std::vector<Mat> grad(3);
    grad[1] = hid.transpose() * dz;
    grad[2] = dz.colwise().sum();
    const Mat dh = (dz * p[1].transpose()).cwiseProduct((hid.array() > 0).cast<double>().matrix());
    grad[0] = ax.transpose() * dh;
    for (std::size_t q = 0; q < 3; ++q) {
      grad[q] += 5e-4 * p[q];
      m1[q] = 0.9 * m1[q] + 0.1 * grad[q];
      m2[q] = 0.999 * m2[q] + 0.001 * grad[q].cwiseProduct(grad[q]);
      const Mat mh = m1[q] / (1 - std::pow(0.9, t));
      const Mat vh = m2[q] / (1 - std::pow(0.999, t));
      p[q].array() -= 0.01 * mh.array() / (vh.array().sqrt() + 1e-8);
    }
  }
  Mat hid;
  const Mat z = forward(hid);
  if (acc_on(z, g.splits().val) > best_val) test_at_best = acc_on(z, g.splits().test);
  return test_at_best;
}

void c12_planetoid() {
  const char* dir = std::getenv("AGSSL_PLANETOID_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "graph.edges")) {
    report(12, "Planetoid GCN baseline", "SKIP", "AGSSL_PLANETOID_DIR not set or holds no dataset export");
    return;
  }
  const Graph g = load_graph(dir).graph;
  std::vector<double> ours, ref;
  for (std::size_t r = 0; r < 5; ++r) {
    DistillConfig cfg;
    cfg.seed = run_seed(0, r);
    ours.push_back(train_vanilla(g, cfg).report.test_acc);
    ref.push_back(reference_gcn_test_accuracy(g, 1000 + r));
  }
  const double a = mean_std(ours).mean, b = mean_std(ref).mean;
  verdict(12, "Planetoid GCN baseline", std::abs(a - b) <= 0.03,
          fmt("toolkit %.4f vs reference %.4f test accuracy (5 seeds), tol 3 pts", a, b));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const Graph sbm = gen_sbm(calibrated_spec());
  c1_gradients();
  c2_rewriting_identity();
  c3_delta_monotone();
  c4_cauchy_schwarz();
  c5_simplex(sbm);
  c6_dominant_teacher(sbm);
  c7_mse_trend(sbm);
  c8_teacher_count(sbm);
  c9_equivalences(sbm);
  c10_pairdis();
  c11_determinism();
  c12_planetoid();
  std::printf("%d failing criteria; total %.1f s\n", g_failures, seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
