#include "agssl/distill.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "agssl/report.hpp"
#include "agssl/rng.hpp"

namespace agssl {

void DistillConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be finite and > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (log_interval < 1) throw std::invalid_argument("log_interval must be >= 1");
}

KdLoss kd_loss(const Matrix& z, const Matrix& pt, double tau, double beta) {
  require_same_shape(z, pt, "kd_loss");
  KdLoss out{0.0, Matrix(z.rows(), z.cols())};
  if (beta == 0.0 || z.rows() == 0) return out;
  const double n = static_cast<double>(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto zt = softmax_temp(z.row(i), tau);
    out.loss += kl_div(pt.row(i), zt);
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < zt.size(); ++c) g[c] = beta * tau / n * (zt[c] - pt(i, c));
  }
  out.loss *= beta * tau * tau / n;
  return out;
}

std::pair<double, double> rewriting_identity_check(const Matrix& zt, const Matrix& pt) {
  require_same_shape(zt, pt, "rewriting_identity_check");
  if (zt.rows() == 0) return {0.0, 0.0};
  double kl = 0.0, ce_minus_h = 0.0;
  for (std::size_t i = 0; i < zt.rows(); ++i) {
    kl += kl_div(pt.row(i), zt.row(i));
    ce_minus_h += cross_entropy_row(pt.row(i), zt.row(i)) - entropy_row(pt.row(i));
  }
  const double n = static_cast<double>(zt.rows());
  return {kl / n, ce_minus_h / n};
}

double mse_to_onehot(const Matrix& pt, std::span<const int> labels, std::span<const NodeId> nodes) {
  if (nodes.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (NodeId node : nodes) {
    const auto i = static_cast<std::size_t>(node);
    double row = 0.0;
    for (std::size_t c = 0; c < pt.cols(); ++c) {
      const double d = pt(i, c) - (static_cast<int>(c) == labels[node] ? 1.0 : 0.0);
      row += d * d;
    }
    s += row / static_cast<double>(pt.cols());
  }
  return s / static_cast<double>(nodes.size());
}

namespace {

StudentModel init_student(const Graph& g, const DistillConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {stream::kStudentInit}));
  StudentModel m;
  m.encoder = GcnEncoder::glorot(g.feature_dim(), cfg.hidden, cfg.layers, rng);
  m.head = Linear::glorot(cfg.hidden, static_cast<std::size_t>(g.num_classes()), rng);
  m.integrator = cfg.integrator;
  return m;
}

void check_bundle(const Graph& g, const TeacherBundle& bundle) {
  if (bundle.num_teachers() == 0) throw std::invalid_argument("empty teacher bundle");
  if (bundle.num_nodes() != static_cast<std::size_t>(g.num_nodes()) ||
      bundle.num_classes() != static_cast<std::size_t>(g.num_classes()))
    throw std::invalid_argument("bundle does not match graph: bundle is " + std::to_string(bundle.num_nodes()) + "×" +
                                std::to_string(bundle.num_classes()) + ", graph is " + std::to_string(g.num_nodes()) +
                                "×" + std::to_string(g.num_classes()));
}

/// `bundle` may be null, in which case the KD term and integration are off.
StudentRun run_student(const Graph& g, const TeacherBundle* bundle, const DistillConfig& cfg) {
  cfg.validate();
  if (bundle) check_bundle(g, *bundle);
  const NormalizedAdjacency adj = normalized_adjacency(g);
  const Matrix& x = g.features();
  const auto& labels = g.labels();
  const auto& splits = g.splits();
  const std::size_t n = static_cast<std::size_t>(g.num_nodes());

  StudentRun run;
  StudentModel& m = run.model;
  m = init_student(g, cfg);
  run.report.strategy = bundle ? bundle->strategy : Strategy::JointTraining;

  const std::size_t k = bundle ? bundle->num_teachers() : 0;
  Matrix fixed_weights;
  if (bundle) {
    switch (cfg.integrator) {
      case IntegratorKind::Random:
        fixed_weights = weights_random(n, k, derive_seed(cfg.seed, {stream::kRandomWeights}));
        break;
      case IntegratorKind::Average: fixed_weights = weights_average(n, k); break;
      case IntegratorKind::Weighted: fixed_weights = weights_labeled_ce(*bundle, labels, splits.train); break;
      case IntegratorKind::Lf:
      case IntegratorKind::Ts:
        m.gamma.emplace(cfg.integrator, k, bundle->num_classes(), cfg.seed, cfg.gamma_adam);
        break;
    }
  }

  Adam adam(cfg.adam);
  std::vector<Matrix*> params = m.encoder.parameters();
  for (Matrix* p : m.head.parameters()) params.push_back(p);

  double best = -1.0;
  GcnEncoder best_encoder;
  Linear best_head;
  bool have_snap = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    GcnCache cache;
    const Matrix h = gcn_forward(adj, x, m.encoder, &cache);
    const Matrix z = m.head.forward(h);
    auto ce = softmax_cross_entropy(z, labels, splits.train);

    EpochMetrics em;
    em.epoch = epoch;
    em.task_loss = ce.loss;
    em.train_acc = accuracy(z, labels, splits.train);
    em.val_acc = accuracy(z, labels, splits.val);
    em.test_acc = accuracy(z, labels, splits.test);

    Matrix dz = std::move(ce.grad);
    if (bundle) {
      const Matrix weights = m.gamma ? m.gamma->weights(z, *bundle) : fixed_weights;
      const Matrix pt = integrate(bundle->soft, weights);
      em.lw = lw_loss(pt, labels, splits.train);
      em.mse_train = mse_to_onehot(pt, labels, splits.train);
      em.mse_test = mse_to_onehot(pt, labels, splits.test);
      if (cfg.beta > 0.0) {
        auto kd = kd_loss(z, pt, cfg.tau, cfg.beta);
        em.kd_loss = kd.loss;
        dz += kd.grad;
      }
      if (epoch % cfg.log_interval == 0 || epoch == cfg.epochs) run.report.weights.push_back({epoch, weights});
    } else {
      em.lw = em.mse_train = em.mse_test = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(em.task_loss + em.kd_loss))
      throw std::runtime_error("non-finite student loss at epoch " + std::to_string(epoch));
    run.report.epochs.push_back(em);

    if (!splits.val.empty() && em.val_acc > best) {
      best = em.val_acc;
      best_encoder = m.encoder;
      best_head = m.head;
      have_snap = true;
      run.report.best_epoch = epoch;
    }

    Matrix d_h;
    const LinearGrad hg = linear_backward(m.head, h, dz, &d_h);
    std::vector<Matrix> grads = gcn_backward(adj, m.encoder, cache, d_h);
    grads.push_back(hg.weight);
    grads.push_back(hg.bias);
    adam.step(params, grads);

    if (m.gamma) m.gamma->step(z, *bundle, labels, splits.train);
  }

  const Matrix final_z = student_logits(g, m);
  const double final_val = accuracy(final_z, labels, splits.val);
  if (have_snap && !(final_val > best)) {
    m.encoder = std::move(best_encoder);
    m.head = std::move(best_head);
  } else {
    run.report.best_epoch = 0;
  }
  const Matrix z = student_logits(g, m);
  run.report.val_acc = accuracy(z, labels, splits.val);
  run.report.test_acc = accuracy(z, labels, splits.test);
  return run;
}

}  // namespace

StudentRun train_student(const Graph& g, const TeacherBundle& bundle, const DistillConfig& cfg) {
  if (bundle.strategy != Strategy::JointTraining)
    throw std::invalid_argument("train_student needs a jt bundle; use train_student_pf for pf teachers");
  return run_student(g, &bundle, cfg);
}

StudentRun train_student_pf(const Graph& g, const TeacherBundle& bundle, const DistillConfig& cfg) {
  if (bundle.strategy != Strategy::PretrainFinetune)
    throw std::invalid_argument("train_student_pf needs a pf bundle");
  return run_student(g, &bundle, cfg);
}

StudentRun train_vanilla(const Graph& g, const DistillConfig& cfg) { return run_student(g, nullptr, cfg); }

Matrix student_logits(const Graph& g, const StudentModel& model) {
  return model.head.forward(gcn_forward(normalized_adjacency(g), g.features(), model.encoder));
}

}  // namespace agssl
