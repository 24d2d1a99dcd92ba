#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/integrate.hpp"
#include "agssl/nn.hpp"
#include "agssl/teacher.hpp"

namespace agssl {

struct DistillConfig {
  IntegratorKind integrator = IntegratorKind::Lf;
  double beta = 1.0;
  double tau = 1.0;
  int epochs = 500;
  std::uint64_t seed = 0;
  std::size_t hidden = 64;
  std::size_t layers = 1;
  AdamConfig adam;
  /// Optimizer for the integration parameters; no weight decay by default.
  AdamConfig gamma_adam{0.01, 0.9, 0.999, 1e-8, 0.0};
  /// λ snapshots are kept every `log_interval` epochs and at the last epoch.
  int log_interval = 10;

  void validate() const;
};

struct KdLoss {
  double loss = 0.0;
  Matrix grad;  ///< dL/dz
};

/// β·(τ²/N)·Σ_i KL(p^t_i ‖ softmax(z_i/τ)); gradient β·(τ/N)·(z̃_i − p^t_i).
KdLoss kd_loss(const Matrix& student_logits, const Matrix& pt, double tau, double beta);

/// Returns ((1/N)Σ KL(p^t‖z̃), (1/N)Σ [CE(p^t, z̃) − H(p^t)]).
std::pair<double, double> rewriting_identity_check(const Matrix& zt, const Matrix& pt);

/// Mean over `nodes` of ‖p^t_i − e_{y_i}‖² / C. NaN for an empty set.
double mse_to_onehot(const Matrix& pt, std::span<const int> labels, std::span<const NodeId> nodes);

struct EpochMetrics {
  int epoch = 0;
  double task_loss = 0.0;
  double kd_loss = 0.0;
  double lw = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double mse_train = 0.0;
  double mse_test = 0.0;
};

struct WeightSnapshot {
  int epoch = 0;
  Matrix weights;  ///< N×K
};

struct RunReport {
  std::vector<EpochMetrics> epochs;
  std::vector<WeightSnapshot> weights;
  Strategy strategy = Strategy::JointTraining;
  int best_epoch = 0;  ///< 0 = parameters after the last step
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct StudentModel {
  GcnEncoder encoder;
  Linear head;
  IntegratorKind integrator = IntegratorKind::Average;
  std::optional<GammaLearner> gamma;
};

struct StudentRun {
  StudentModel model;
  RunReport report;
};

/// Student trained on L_task(train) + KD(all nodes) against the integrated
/// teacher, one Adam step on (θ, ω) per epoch followed by one γ step for
/// lf / ts. Returns the best-validation snapshot. Requires a JT bundle.
StudentRun train_student(const Graph& g, const TeacherBundle& bundle, const DistillConfig& cfg);

/// Same loop for a bundle of pre-trained-then-fine-tuned teachers.
StudentRun train_student_pf(const Graph& g, const TeacherBundle& bundle, const DistillConfig& cfg);

/// Plain GCN with the student's initialization and schedule (no teachers).
StudentRun train_vanilla(const Graph& g, const DistillConfig& cfg);

Matrix student_logits(const Graph& g, const StudentModel& model);

}  // namespace agssl
