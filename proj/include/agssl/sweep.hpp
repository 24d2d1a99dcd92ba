#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "agssl/distill.hpp"
#include "agssl/graph.hpp"
#include "agssl/integrate.hpp"
#include "agssl/teacher.hpp"

namespace agssl {

/// Seed of the r-th repetition under a master seed.
std::uint64_t run_seed(std::uint64_t master, std::size_t r);

/// train_student or train_student_pf, chosen by the bundle's strategy.
StudentRun distill_student(const Graph& g, const TeacherBundle& bundle, const DistillConfig& cfg);

struct TeacherCountRow {
  std::size_t k = 0;
  IntegratorKind integrator = IntegratorKind::Average;
  std::size_t seed = 0;  ///< repetition index
  double test_acc = 0.0;
};

struct TeacherCountOptions {
  Strategy strategy = Strategy::JointTraining;
  TeacherConfig teacher;
  DistillConfig student;  ///< integrator and seed are overwritten per cell
  std::vector<IntegratorKind> integrators{std::begin(kAllIntegrators), std::end(kAllIntegrators)};
  std::size_t seeds = 5;
  std::uint64_t master_seed = 0;
  /// Repetitions for which this returns true are skipped entirely.
  std::function<bool(std::size_t seed)> skip_seed;
  /// Called after each finished repetition with that repetition's rows.
  std::function<void(std::span<const TeacherCountRow>)> on_seed_done;
};

/// For each repetition: trains one teacher per pool task (in pool order),
/// then students on every prefix bundle K = 1..|pool| for every integrator.
/// Rows are ordered by (seed, K, integrator).
std::vector<TeacherCountRow> teacher_count_sweep(const Graph& g, std::span<const TaskKind> pool,
                                                 const TeacherCountOptions& opts);

}  // namespace agssl
