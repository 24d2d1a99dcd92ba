#include <doctest.h>

#include <cmath>

#include "agssl/distill.hpp"
#include "agssl/sweep.hpp"
#include "helpers.hpp"

using namespace agssl;

namespace {

Graph sbm(std::uint64_t seed) {
  SbmSpec spec;
  spec.blocks = {{30, 0}, {30, 1}};
  spec.p_in = 0.2;
  spec.p_out = 0.02;
  spec.class_means = axis_class_means(2, 8, 1.0);
  spec.sigma = 1.2;
  spec.seed = seed;
  return gen_sbm(spec);
}

DistillConfig quick(IntegratorKind kind, std::uint64_t seed) {
  DistillConfig cfg;
  cfg.integrator = kind;
  cfg.epochs = 40;
  cfg.hidden = 16;
  cfg.seed = seed;
  cfg.log_interval = 1;
  return cfg;
}

TeacherBundle noisy_bundle(const Graph& g, std::size_t k, std::uint64_t seed, double tau = 1.0) {
  Rng rng(seed);
  std::vector<Matrix> logits;
  for (std::size_t t = 0; t < k; ++t) {
    Matrix l = testutil::random_matrix(static_cast<std::size_t>(g.num_nodes()), 2, rng);
    for (NodeId i = 0; i < g.num_nodes(); ++i) l(i, g.labels()[i]) += 1.0;
    logits.push_back(std::move(l));
  }
  return make_bundle(std::move(logits), tau);
}

bool same_trajectory(const RunReport& a, const RunReport& b) {
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    const auto &x = a.epochs[e], &y = b.epochs[e];
    if (x.task_loss != y.task_loss || x.train_acc != y.train_acc || x.val_acc != y.val_acc || x.test_acc != y.test_acc)
      return false;
  }
  return a.best_epoch == b.best_epoch && a.test_acc == b.test_acc;
}

}  // namespace

TEST_SUITE("distill") {
  TEST_CASE("config validation") {
    DistillConfig c;
    CHECK_NOTHROW(c.validate());
    c.tau = 0;
    CHECK_THROWS(c.validate());
    c = {};
    c.beta = -1;
    CHECK_THROWS(c.validate());
    c = {};
    c.beta = std::nan("");
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("kd loss against direct KL and its gradient") {
    Rng rng(1);
    Matrix z = testutil::random_matrix(8, 3, rng, 2.0);
    const Matrix pt = testutil::random_simplex_rows(8, 3, rng);
    for (double tau : {1.0, 2.5}) {
      const double beta = 0.7;
      const auto kd = kd_loss(z, pt, tau, beta);
      double expect = 0;
      for (std::size_t i = 0; i < 8; ++i) expect += kl_div(pt.row(i), softmax_temp(z.row(i), tau));
      expect *= beta * tau * tau / 8;
      CHECK(kd.loss == doctest::Approx(expect).epsilon(1e-13));
      Matrix* params[] = {&z};
      const Matrix grads[] = {kd.grad};
      CHECK(grad_check([&] { return kd_loss(z, pt, tau, beta).loss; }, params, grads) < 1e-4);
    }
  }

  TEST_CASE("KL equals cross-entropy minus entropy") {
    Rng rng(2);
    const Matrix zt = testutil::random_simplex_rows(20, 4, rng, 2.0);
    const Matrix pt = testutil::random_simplex_rows(20, 4, rng, 2.0);
    const auto [kl, ce_h] = rewriting_identity_check(zt, pt);
    CHECK(std::abs(kl - ce_h) <= 1e-10);
    CHECK(kl > 0);
  }

  TEST_CASE("mse to one-hot") {
    const Matrix pt{{0.5, 0.5}, {1.0, 0.0}, {0.2, 0.8}};
    const std::vector<int> y{0, 0, 0};
    const std::vector<NodeId> nodes{0, 1, 2};
    CHECK(mse_to_onehot(pt, y, nodes) == doctest::Approx((0.5 + 0 + 1.28) / 6).epsilon(1e-14));
    CHECK(std::isnan(mse_to_onehot(pt, y, std::vector<NodeId>{})));
  }

  TEST_CASE("beta = 0 reproduces vanilla training bitwise") {
    const Graph g = sbm(1);
    const auto b = noisy_bundle(g, 3, 2);
    for (auto kind : kAllIntegrators) {
      CAPTURE(to_string(kind));
      auto cfg = quick(kind, 5);
      const auto vanilla = train_vanilla(g, cfg);
      cfg.beta = 0.0;
      const auto kd = train_student(g, b, cfg);
      CHECK(same_trajectory(vanilla.report, kd.report));
      CHECK(student_logits(g, vanilla.model) == student_logits(g, kd.model));
    }
  }

  TEST_CASE("K = 1 makes every integrator identical") {
    const Graph g = sbm(2);
    const auto b = noisy_bundle(g, 1, 3);
    const auto ref = train_student(g, b, quick(IntegratorKind::Average, 7));
    for (auto kind : kAllIntegrators) {
      CAPTURE(to_string(kind));
      const auto run = train_student(g, b, quick(kind, 7));
      for (const auto& w : run.report.weights) CHECK(w.weights == Matrix(60, 1, 1.0));
      CHECK(same_trajectory(ref.report, run.report));
      CHECK(student_logits(g, ref.model) == student_logits(g, run.model));
    }
  }

  TEST_CASE("average over identical teachers equals K = 1") {
    const Graph g = sbm(3);
    const auto one = noisy_bundle(g, 1, 4);
    const auto three = make_bundle({one.logits[0], one.logits[0], one.logits[0]}, 1.0);
    const auto a = train_student(g, one, quick(IntegratorKind::Average, 2));
    const auto b = train_student(g, three, quick(IntegratorKind::Average, 2));
    CHECK(same_trajectory(a.report, b.report));
    CHECK(student_logits(g, a.model) == student_logits(g, b.model));
  }

  TEST_CASE("weights stay on the simplex every epoch") {
    const Graph g = sbm(4);
    const auto b = noisy_bundle(g, 3, 5);
    for (auto kind : kAllIntegrators) {
      const auto run = train_student(g, b, quick(kind, 1));
      CHECK(run.report.weights.size() == 40);
      for (const auto& snap : run.report.weights) {
        const Matrix pt = integrate(b.soft, snap.weights);
        for (const Matrix* m : {&snap.weights, &pt})
          for (std::size_t i = 0; i < m->rows(); ++i) {
            double s = 0;
            for (double v : m->row(i)) {
              REQUIRE(v >= 0.0);
              s += v;
            }
            REQUIRE(std::abs(s - 1.0) <= 1e-10);
          }
      }
    }
  }

  TEST_CASE("learned integrators move away from uniform and reduce L_W") {
    const Graph g = sbm(5);
    auto b = noisy_bundle(g, 2, 6);
    // second teacher is uninformative
    b = make_bundle({b.logits[0], Matrix(60, 2)}, 1.0);
    for (auto kind : {IntegratorKind::Lf, IntegratorKind::Ts}) {
      auto cfg = quick(kind, 3);
      cfg.epochs = 150;
      const auto run = train_student(g, b, cfg);
      CHECK(run.report.epochs.back().lw < run.report.epochs.front().lw);
      double mean_first = 0;
      for (NodeId i : g.splits().train) mean_first += run.report.weights.back().weights(i, 0);
      CHECK(mean_first / g.splits().train.size() > 0.5);
    }
  }

  TEST_CASE("strategy mismatches and shape errors are rejected") {
    const Graph g = sbm(6);
    auto b = noisy_bundle(g, 2, 1);
    b.strategy = Strategy::PretrainFinetune;
    CHECK_THROWS_AS(train_student(g, b, quick(IntegratorKind::Lf, 1)), std::invalid_argument);
    CHECK_NOTHROW(train_student_pf(g, b, quick(IntegratorKind::Lf, 1)));
    CHECK_NOTHROW(distill_student(g, b, quick(IntegratorKind::Lf, 1)));
    const auto wrong = make_bundle({Matrix(10, 2)}, 1.0);
    CHECK_THROWS_WITH(train_student(g, wrong, quick(IntegratorKind::Lf, 1)), doctest::Contains("does not match"));
  }

  TEST_CASE("runs are deterministic per seed") {
    const Graph g = sbm(8);
    const auto b = noisy_bundle(g, 3, 2);
    const auto a = train_student(g, b, quick(IntegratorKind::Ts, 4));
    const auto c = train_student(g, b, quick(IntegratorKind::Ts, 4));
    CHECK(student_logits(g, a.model) == student_logits(g, c.model));
    CHECK(run_seed(1, 0) != run_seed(1, 1));
  }
}
