#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string_view>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/nn.hpp"
#include "agssl/pretext.hpp"

namespace agssl {

enum class Strategy { JointTraining, PretrainFinetune };

/// "jt" / "pf".
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct TeacherConfig {
  std::size_t hidden = 64;
  std::size_t layers = 1;
  double alpha = 1.0;
  /// JT epochs, or fine-tune epochs for P&F.
  int epochs = 500;
  int pretrain_epochs = 200;
  AdamConfig adam;
  PretextConfig pretext;
};

struct TrainLog {
  std::vector<double> pretrain_loss;  ///< P&F stage 1 only
  std::vector<double> total_loss;
  std::vector<double> task_loss;
  std::vector<double> ssl_loss;
  std::vector<double> val_acc;
};

struct TeacherModel {
  GcnEncoder encoder;
  Linear task_head;
  Linear ssl_head;  ///< 0 outputs for DGI
  PretextTask task;
  Strategy strategy = Strategy::JointTraining;
  std::uint64_t seed = 0;
  bool trained = false;
  int best_epoch = 0;  ///< 0 = parameters after the last step
  double best_val_acc = 0.0;
  TrainLog log;
};

/// Joint training of L_task + alpha·L_ssl, full batch, one Adam step per
/// epoch, best-validation snapshot. alpha = 0 is plain GCN training.
/// Throws std::runtime_error on a non-finite loss.
TeacherModel train_teacher_jt(const Graph& g, const PretextTask& task, const TeacherConfig& cfg, std::uint64_t seed);

/// Stage 1: `cfg.pretrain_epochs` of L_ssl on (encoder, ssl head). Stage 2:
/// `cfg.epochs` of L_task on (encoder, task head) with a fresh optimizer and
/// best-validation snapshot.
TeacherModel train_teacher_pf(const Graph& g, const PretextTask& task, const TeacherConfig& cfg, std::uint64_t seed);

/// Task-head logits over the teacher's own propagation graph.
Matrix teacher_logits(const Graph& g, const TeacherModel& model);

/// Builds the pretext tasks for `kinds` and trains one teacher per task on a
/// worker pool. Seeds depend on (master_seed, position of the kind in the
/// canonical pool), never on the order of `kinds`.
std::vector<TeacherModel> train_teachers(const Graph& g, std::span<const TaskKind> kinds, Strategy strategy,
                                         const TeacherConfig& cfg, std::uint64_t master_seed);

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

struct TeacherBundle {
  std::vector<Matrix> logits;  ///< K × (N×C)
  std::vector<Matrix> soft;    ///< softmax(logits / tau)
  double tau = 1.0;
  std::vector<TaskKind> tasks;
  std::vector<std::uint64_t> seeds;
  std::vector<double> val_acc;
  Strategy strategy = Strategy::JointTraining;

  std::size_t num_teachers() const noexcept { return logits.size(); }
  std::size_t num_nodes() const { return logits.front().rows(); }
  std::size_t num_classes() const { return logits.front().cols(); }

  /// First k teachers.
  TeacherBundle prefix(std::size_t k) const;
};

/// Bundle from raw logits; soft rows computed with temperature tau.
TeacherBundle make_bundle(std::vector<Matrix> logits, double tau);

/// Throws std::invalid_argument when any model is untrained.
TeacherBundle freeze_and_export(const Graph& g, std::span<const TeacherModel> models, double tau);

/// logits.npy (K, N, C) plus manifest.json. Keys of `extra` (a JSON
/// object) are added to the manifest.
void save_bundle(const TeacherBundle& bundle, const std::filesystem::path& dir);
void save_bundle(const TeacherBundle& bundle, const std::filesystem::path& dir, const nlohmann::json& extra);
TeacherBundle load_bundle(const std::filesystem::path& dir);

}  // namespace agssl
