#include "agssl/sweep.hpp"

#include <stdexcept>

#include "agssl/parallel.hpp"
#include "agssl/rng.hpp"

namespace agssl {

std::uint64_t run_seed(std::uint64_t master, std::size_t r) {
  return derive_seed(master, {stream::kSeedRun, static_cast<std::uint64_t>(r)});
}

StudentRun distill_student(const Graph& g, const TeacherBundle& bundle, const DistillConfig& cfg) {
  return bundle.strategy == Strategy::JointTraining ? train_student(g, bundle, cfg) : train_student_pf(g, bundle, cfg);
}

std::vector<TeacherCountRow> teacher_count_sweep(const Graph& g, std::span<const TaskKind> pool,
                                                 const TeacherCountOptions& opts) {
  if (pool.empty()) throw std::invalid_argument("teacher_count_sweep: empty task pool");
  if (opts.integrators.empty()) throw std::invalid_argument("teacher_count_sweep: no integrators");
  std::vector<TeacherCountRow> all;
  const std::size_t n_int = opts.integrators.size();
  for (std::size_t r = 0; r < opts.seeds; ++r) {
    if (opts.skip_seed && opts.skip_seed(r)) continue;
    const std::uint64_t seed = run_seed(opts.master_seed, r);
    const auto teachers = train_teachers(g, pool, opts.strategy, opts.teacher, seed);
    const TeacherBundle full = freeze_and_export(g, teachers, opts.student.tau);

    std::vector<TeacherCountRow> rows(pool.size() * n_int);
    parallel_for(rows.size(), [&](std::size_t cell) {
      const std::size_t k = cell / n_int + 1;
      DistillConfig cfg = opts.student;
      cfg.integrator = opts.integrators[cell % n_int];
      cfg.seed = seed;
      const StudentRun run = distill_student(g, full.prefix(k), cfg);
      rows[cell] = {k, cfg.integrator, r, run.report.test_acc};
    });
    if (opts.on_seed_done) opts.on_seed_done(rows);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

}  // namespace agssl
