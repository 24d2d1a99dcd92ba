#include "agssl/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "agssl/distill.hpp"
#include "agssl/integrate.hpp"
#include "agssl/io.hpp"
#include "agssl/parallel.hpp"
#include "agssl/report.hpp"
#include "agssl/sweep.hpp"
#include "agssl/teacher.hpp"

namespace agssl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<SbmBlock> parse_blocks(std::string_view text) {
  std::vector<SbmBlock> blocks;
  for (auto group : io::split(text, ',')) {
    group = io::trim(group);
    const auto x = group.find_first_of("xX");
    long long size = 0, count = 1;
    try {
      if (x == std::string_view::npos) {
        size = io::parse_int(group);
      } else {
        size = io::parse_int(group.substr(0, x));
        count = io::parse_int(group.substr(x + 1));
      }
    } catch (const std::exception&) {
      throw UsageError("bad --blocks group '" + std::string(group) + "' (expected SIZExCOUNT, e.g. 50x2)");
    }
    if (size < 1 || count < 1) throw UsageError("--blocks sizes and counts must be positive");
    for (long long c = 0; c < count; ++c)
      blocks.push_back({static_cast<std::size_t>(size), static_cast<int>(blocks.size())});
  }
  if (blocks.empty()) throw UsageError("--blocks is empty");
  return blocks;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    std::vector<std::string> lines;
    try {
      lines = io::read_lines(path);
    } catch (const std::exception& e) {
      throw UsageError(std::string("cannot read config: ") + e.what());
    }
    for (const auto& raw : lines) {
      const auto line = io::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw UsageError("config line without '=': " + std::string(line));
      std::string key(io::trim(line.substr(0, eq)));
      std::replace(key.begin(), key.end(), '_', '-');
      from_file.push_back("--" + key + "=" + std::string(io::trim(line.substr(eq + 1))));
    }
  }
  // After argv[0] and the command name.
  const std::size_t at = std::min<std::size_t>(rest.size(), 2);
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), from_file.begin(), from_file.end());
  return rest;
}

namespace {

/// Converts std::invalid_argument raised while interpreting flag values.
template <class Fn>
auto as_usage(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  for (auto part : io::split(text, ',')) {
    part = io::trim(part);
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

std::vector<TaskKind> parse_tasks(std::string_view text) {
  std::vector<TaskKind> kinds;
  for (const auto& name : split_list(text)) {
    const TaskKind k = as_usage([&] { return parse_task_kind(name); });
    if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) throw UsageError("duplicate task: " + name);
    kinds.push_back(k);
  }
  if (kinds.empty()) throw UsageError("--tasks is empty");
  return kinds;
}

std::vector<IntegratorKind> parse_integrators(std::string_view text) {
  std::vector<IntegratorKind> out;
  for (const auto& name : split_list(text)) {
    const IntegratorKind k = as_usage([&] { return parse_integrator(name); });
    if (std::find(out.begin(), out.end(), k) != out.end()) throw UsageError("duplicate integrator: " + name);
    out.push_back(k);
  }
  if (out.empty()) throw UsageError("no integrators given");
  return out;
}

std::string tasks_string(std::span<const TaskKind> kinds) {
  std::string s;
  for (TaskKind k : kinds) s += (s.empty() ? "" : ",") + std::string(to_string(k));
  return s;
}

/// Hash over the contents of the given files, in order.
std::string input_hash(const std::vector<fs::path>& files) {
  std::string listing;
  for (const auto& f : files)
    if (fs::exists(f)) listing += io::git_blob_hash(io::read_file(f)) + " " + f.filename().string() + "\n";
  return io::git_blob_hash(listing);
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  return {dir / "graph.edges", dir / "features.csv", dir / "labels.csv", dir / "splits.json"};
}

std::vector<fs::path> bundle_files(const fs::path& dir) { return {dir / "logits.npy", dir / "manifest.json"}; }

Graph load_data(const fs::path& dir) {
  auto lg = load_graph(dir);
  if (lg.dropped_self_loops > 0)
    std::cerr << "warning: dropped " << lg.dropped_self_loops << " self-loop entries from " << dir.string() << "\n";
  return std::move(lg.graph);
}

TeacherBundle resoften(const TeacherBundle& b, double tau) {
  TeacherBundle out = make_bundle(b.logits, tau);
  out.tasks = b.tasks;
  out.seeds = b.seeds;
  out.val_acc = b.val_acc;
  out.strategy = b.strategy;
  return out;
}

void check_bundle_matches(const Graph& g, const TeacherBundle& b) {
  if (b.num_nodes() != static_cast<std::size_t>(g.num_nodes()) || b.num_classes() != static_cast<std::size_t>(g.num_classes()))
    throw std::runtime_error("bundle/graph mismatch: bundle has N=" + std::to_string(b.num_nodes()) +
                             ", C=" + std::to_string(b.num_classes()) + "; graph has N=" +
                             std::to_string(g.num_nodes()) + ", C=" + std::to_string(g.num_classes()));
}

std::string fmt(double v) { return csv_number(v); }

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOptions {
  std::string blocks;
  double p_in = 0.0, p_out = 0.0;
  std::size_t dim = 16;
  double mu = 1.0, sigma = 1.0;
  std::uint64_t seed = 0;
  double train_rate = 0.1, val_rate = 0.1;
  std::string out;
  bool write_posterior = false;
};

int cmd_gen(const GenOptions& o) {
  SbmSpec spec;
  spec.blocks = parse_blocks(o.blocks);
  spec.p_in = o.p_in;
  spec.p_out = o.p_out;
  spec.sigma = o.sigma;
  spec.seed = o.seed;
  spec.train_rate = o.train_rate;
  spec.val_rate = o.val_rate;
  if (o.dim < 1) throw UsageError("--dim must be >= 1");
  as_usage([&] {
    spec.class_means = axis_class_means(spec.num_classes(), o.dim, o.mu);
    spec.validate();
  });
  const Graph g = gen_sbm(spec);
  save_graph(g, o.out);
  if (o.write_posterior) {
    const Matrix post = sbm_feature_posterior(spec, g.features());
    std::string text;
    for (std::size_t i = 0; i < post.rows(); ++i) {
      for (std::size_t c = 0; c < post.cols(); ++c) text += (c ? "," : "") + io::format_double(post(i, c));
      text += "\n";
    }
    io::write_file_atomic(fs::path(o.out) / "posterior.csv", text);
  }
  std::cout << "wrote " << g.num_nodes() << " nodes, " << g.num_edges() << " edges, " << g.num_classes()
            << " classes to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-teachers
// ---------------------------------------------------------------------------

struct TeacherOptions {
  std::string data, out;
  std::string tasks = "par,clu,dgi,pairdis,pairsim";
  std::string strategy = "jt";
  double alpha = 1.0, tau = 1.0;
  int epochs = 500, pretrain_epochs = 200;
  std::size_t hidden = 64, layers = 1;
  std::uint64_t seed = 0;
};

TeacherConfig teacher_config(const TeacherOptions& o) {
  if (!(o.alpha >= 0.0)) throw UsageError("--alpha must be >= 0");
  if (!(o.tau > 0.0)) throw UsageError("--tau must be > 0");
  if (o.epochs < 0 || o.pretrain_epochs < 0) throw UsageError("epoch counts must be >= 0");
  if (o.layers < 1 || o.layers > 2) throw UsageError("--layers must be 1 or 2");
  if (o.hidden < 1) throw UsageError("--hidden must be >= 1");
  TeacherConfig cfg;
  cfg.alpha = o.alpha;
  cfg.epochs = o.epochs;
  cfg.pretrain_epochs = o.pretrain_epochs;
  cfg.hidden = o.hidden;
  cfg.layers = o.layers;
  return cfg;
}

int cmd_train_teachers(const TeacherOptions& o) {
  const auto kinds = parse_tasks(o.tasks);
  const Strategy strategy = as_usage([&] { return parse_strategy(o.strategy); });
  const TeacherConfig cfg = teacher_config(o);
  const Graph g = load_data(o.data);

  const auto teachers = train_teachers(g, kinds, strategy, cfg, o.seed);
  const TeacherBundle bundle = freeze_and_export(g, teachers, o.tau);
  json extra;
  extra["alpha"] = o.alpha;
  extra["epochs"] = o.epochs;
  extra["pretrain_epochs"] = strategy == Strategy::PretrainFinetune ? o.pretrain_epochs : 0;
  extra["hidden"] = o.hidden;
  extra["layers"] = o.layers;
  extra["seed"] = o.seed;
  extra["data_hash"] = input_hash(dataset_files(o.data));
  std::vector<int> best_epochs;
  for (const auto& t : teachers) best_epochs.push_back(t.best_epoch);
  extra["best_epoch"] = best_epochs;
  save_bundle(bundle, o.out, extra);

  for (const auto& t : teachers)
    std::printf("%-8s val_acc=%.4f best_epoch=%d\n", std::string(to_string(t.task.kind)).c_str(), t.best_val_acc,
                t.best_epoch);
  std::cout << "bundle K=" << bundle.num_teachers() << " strategy=" << to_string(strategy) << " written to " << o.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

struct DistillOptions {
  std::string data, bundle, out;
  std::string integrator = "lf";
  double beta = 1.0, tau = 1.0;
  bool tau_given = false;
  int epochs = 500;
  std::size_t seeds = 5, hidden = 64, layers = 1;
  std::uint64_t seed = 0;
};

DistillConfig distill_config(IntegratorKind kind, double beta, double tau, int epochs, std::size_t hidden,
                             std::size_t layers) {
  DistillConfig cfg;
  cfg.integrator = kind;
  cfg.beta = beta;
  cfg.tau = tau;
  cfg.epochs = epochs;
  cfg.hidden = hidden;
  cfg.layers = layers;
  if (layers < 1 || layers > 2) throw UsageError("--layers must be 1 or 2");
  if (hidden < 1) throw UsageError("--hidden must be >= 1");
  as_usage([&] { cfg.validate(); });
  return cfg;
}

std::string curves_csv(const std::vector<StudentRun>& runs) {
  struct Series {
    const char* split;
    const char* metric;
    double EpochMetrics::*field;
  };
  static constexpr Series kSeries[] = {
      {"train", "accuracy", &EpochMetrics::train_acc}, {"val", "accuracy", &EpochMetrics::val_acc},
      {"test", "accuracy", &EpochMetrics::test_acc},   {"train", "task_loss", &EpochMetrics::task_loss},
      {"all", "kd_loss", &EpochMetrics::kd_loss},      {"train", "lw", &EpochMetrics::lw},
      {"train", "mse", &EpochMetrics::mse_train},      {"test", "mse", &EpochMetrics::mse_test},
  };
  std::string out = "epoch,split,metric,value\n";
  const std::size_t n_epochs = runs.front().report.epochs.size();
  for (std::size_t e = 0; e < n_epochs; ++e) {
    for (const auto& s : kSeries) {
      double sum = 0.0;
      for (const auto& r : runs) sum += r.report.epochs[e].*(s.field);
      out += std::to_string(e + 1) + "," + s.split + "," + s.metric + "," + fmt(sum / static_cast<double>(runs.size())) +
             "\n";
    }
  }
  return out;
}

std::string weights_csv(const RunReport& report, std::span<const TaskKind> tasks) {
  std::string out = "epoch,node,task,weight\n";
  for (const auto& snap : report.weights)
    for (std::size_t i = 0; i < snap.weights.rows(); ++i)
      for (std::size_t k = 0; k < snap.weights.cols(); ++k)
        out += std::to_string(snap.epoch) + "," + std::to_string(i) + "," +
               (k < tasks.size() ? std::string(to_string(tasks[k])) : std::to_string(k)) + "," +
               io::format_double(snap.weights(i, k)) + "\n";
  return out;
}

int cmd_distill(const DistillOptions& o) {
  const IntegratorKind kind = as_usage([&] { return parse_integrator(o.integrator); });
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  const Graph g = load_data(o.data);
  TeacherBundle bundle = load_bundle(o.bundle);
  check_bundle_matches(g, bundle);
  const double tau = o.tau_given ? o.tau : bundle.tau;
  DistillConfig base = distill_config(kind, o.beta, tau, o.epochs, o.hidden, o.layers);
  as_usage([&] {
    base.validate();
    return 0;
  });
  if (tau != bundle.tau) bundle = resoften(bundle, tau);

  std::vector<StudentRun> runs(o.seeds);
  std::vector<std::uint64_t> seeds(o.seeds);
  for (std::size_t r = 0; r < o.seeds; ++r) seeds[r] = run_seed(o.seed, r);
  parallel_for(o.seeds, [&](std::size_t r) {
    DistillConfig cfg = base;
    cfg.seed = seeds[r];
    runs[r] = distill_student(g, bundle, cfg);
  });

  const fs::path out(o.out);
  io::write_file_atomic(out / "curves.csv", curves_csv(runs));
  io::write_file_atomic(out / "weights.csv", weights_csv(runs.front().report, bundle.tasks));

  std::vector<double> test, val;
  json per_seed = json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& rep = runs[r].report;
    test.push_back(rep.test_acc);
    val.push_back(rep.val_acc);
    per_seed.push_back({{"index", r},
                        {"seed", seeds[r]},
                        {"best_epoch", rep.best_epoch},
                        {"val_accuracy", rep.val_acc},
                        {"test_accuracy", rep.test_acc}});
  }
  const MeanStd t = mean_std(test), v = mean_std(val);
  json m;
  m["command"] = "distill";
  m["integrator"] = std::string(to_string(kind));
  m["strategy"] = std::string(to_string(bundle.strategy));
  m["beta"] = o.beta;
  m["tau"] = tau;
  m["epochs"] = o.epochs;
  m["hidden"] = o.hidden;
  m["layers"] = o.layers;
  m["seed"] = o.seed;
  m["seeds"] = seeds;
  m["teachers"] = tasks_string(bundle.tasks);
  m["K"] = bundle.num_teachers();
  m["log_interval"] = base.log_interval;
  auto files = dataset_files(o.data);
  for (const auto& f : bundle_files(o.bundle)) files.push_back(f);
  m["input_hash"] = input_hash(files);
  m["runs"] = per_seed;
  m["test_accuracy"] = {{"mean", t.mean}, {"std", t.std}};
  m["val_accuracy"] = {{"mean", v.mean}, {"std", v.std}};
  io::write_file_atomic(out / "manifest.json", m.dump(2) + "\n");

  std::printf("test accuracy: %.4f ± %.4f over %zu seed(s) (%s, K=%zu)\n", t.mean, t.std, o.seeds,
              std::string(to_string(kind)).c_str(), bundle.num_teachers());
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepOptions {
  std::string data, out, grid;
  bool teacher_count = false;
  std::string tasks = "par,clu,dgi,pairdis,pairsim";
  std::string strategy = "jt";
  std::string integrator = "lf";
  std::string integrators = "random,average,weighted,lf,ts";
  double alpha = 1.0, beta = 1.0, tau = 1.0;
  int epochs = 500, pretrain_epochs = 200;
  std::size_t seeds = 5, hidden = 64, layers = 1;
  std::uint64_t seed = 0;
};

/// Existing rows keyed by their first `key_cols` cells.
std::map<std::string, std::vector<std::string>> read_existing(const fs::path& path, const std::string& header,
                                                              std::size_t key_cols) {
  std::map<std::string, std::vector<std::string>> rows;
  if (!fs::exists(path)) return rows;
  const auto table = io::read_csv(path);
  std::string got;
  for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
  if (got != header) throw std::runtime_error(path.string() + " exists with a different header; refusing to resume");
  for (const auto& r : table.rows) {
    if (r.size() < key_cols) continue;
    std::string key;
    for (std::size_t c = 0; c < key_cols; ++c) key += r[c] + ",";
    rows[key] = r;
  }
  return rows;
}

void write_rows(const fs::path& path, const std::string& header, const std::vector<std::string>& order,
                const std::map<std::string, std::vector<std::string>>& rows) {
  std::string text = header + "\n";
  for (const auto& key : order) {
    auto it = rows.find(key);
    if (it == rows.end()) continue;
    std::string line;
    for (const auto& c : it->second) line += (line.empty() ? "" : ",") + c;
    text += line + "\n";
  }
  io::write_file_atomic(path, text);
}

int sweep_teacher_count(const SweepOptions& o, const Graph& g, const std::vector<TaskKind>& pool, Strategy strategy,
                        const TeacherConfig& tcfg) {
  const auto ints = parse_integrators(o.integrators);
  const std::string header = "K,integrator,seed,test_accuracy";
  auto rows = read_existing(o.out, header, 3);
  auto key = [](std::size_t k, IntegratorKind i, std::size_t r) {
    return std::to_string(k) + "," + std::string(to_string(i)) + "," + std::to_string(r) + ",";
  };
  std::vector<std::string> order;
  for (std::size_t r = 0; r < o.seeds; ++r)
    for (std::size_t k = 1; k <= pool.size(); ++k)
      for (IntegratorKind i : ints) order.push_back(key(k, i, r));

  TeacherCountOptions opts;
  opts.strategy = strategy;
  opts.teacher = tcfg;
  opts.student = distill_config(ints.front(), o.beta, o.tau, o.epochs, o.hidden, o.layers);
  opts.integrators = ints;
  opts.seeds = o.seeds;
  opts.master_seed = o.seed;
  opts.skip_seed = [&](std::size_t r) {
    for (std::size_t k = 1; k <= pool.size(); ++k)
      for (IntegratorKind i : ints)
        if (!rows.count(key(k, i, r))) return false;
    return true;
  };
  opts.on_seed_done = [&](std::span<const TeacherCountRow> done) {
    for (const auto& row : done)
      rows[key(row.k, row.integrator, row.seed)] = {std::to_string(row.k), std::string(to_string(row.integrator)),
                                                    std::to_string(row.seed), fmt(row.test_acc)};
    write_rows(o.out, header, order, rows);
  };
  teacher_count_sweep(g, pool, opts);
  write_rows(o.out, header, order, rows);

  std::printf("%-3s", "K");
  for (IntegratorKind i : ints) std::printf(" %10s", std::string(to_string(i)).c_str());
  std::printf("\n");
  for (std::size_t k = 1; k <= pool.size(); ++k) {
    std::printf("%-3zu", k);
    for (IntegratorKind i : ints) {
      std::vector<double> acc;
      for (std::size_t r = 0; r < o.seeds; ++r) {
        auto it = rows.find(key(k, i, r));
        if (it != rows.end() && !it->second[3].empty()) acc.push_back(io::parse_double(it->second[3]));
      }
      std::printf(" %10.4f", mean_std(acc).mean);
    }
    std::printf("\n");
  }
  return 0;
}

struct Grid {
  std::vector<double> alpha, beta, tau;
  std::vector<std::size_t> hidden;
};

Grid read_grid(const fs::path& path, const SweepOptions& o) {
  std::vector<std::string> lines;
  try {
    lines = io::read_lines(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  Grid grid;
  bool any = false;
  std::set<std::string> seen;
  for (const auto& raw : lines) {
    const auto line = io::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw UsageError("grid line without '=': " + std::string(line));
    const std::string key(io::trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw UsageError("grid key repeated: " + key);
    const auto values = split_list(line.substr(eq + 1));
    if (values.empty()) throw UsageError("empty grid: no values for " + key);
    any = true;
    try {
      if (key == "hidden") {
        for (const auto& v : values) grid.hidden.push_back(static_cast<std::size_t>(io::parse_int(v)));
      } else {
        std::vector<double>* dst = key == "alpha" ? &grid.alpha : key == "beta" ? &grid.beta : key == "tau" ? &grid.tau : nullptr;
        if (!dst) throw UsageError("unknown grid key: " + key + " (expected alpha, beta, tau, hidden)");
        for (const auto& v : values) dst->push_back(io::parse_double(v));
      }
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError("bad grid value for " + key + ": " + e.what());
    }
  }
  if (!any) throw UsageError("empty grid");
  if (grid.alpha.empty()) grid.alpha = {o.alpha};
  if (grid.beta.empty()) grid.beta = {o.beta};
  if (grid.tau.empty()) grid.tau = {o.tau};
  if (grid.hidden.empty()) grid.hidden = {o.hidden};
  return grid;
}

int sweep_grid(const SweepOptions& o, const Graph& g, const std::vector<TaskKind>& pool, Strategy strategy,
               TeacherConfig tcfg) {
  const Grid grid = read_grid(o.grid, o);
  const IntegratorKind kind = as_usage([&] { return parse_integrator(o.integrator); });
  for (double a : grid.alpha)
    if (!(a >= 0.0)) throw UsageError("grid alpha must be >= 0");
  for (double t : grid.tau)
    if (!(t > 0.0)) throw UsageError("grid tau must be > 0");
  for (double b : grid.beta)
    if (!(b >= 0.0)) throw UsageError("grid beta must be >= 0");
  for (std::size_t h : grid.hidden)
    if (h < 1) throw UsageError("grid hidden must be >= 1");

  const std::string header = "alpha,beta,tau,hidden,integrator,seed,val_accuracy,test_accuracy";
  auto rows = read_existing(o.out, header, 6);
  const std::string int_name(to_string(kind));
  auto key = [&](double a, double b, double t, std::size_t h, std::size_t r) {
    return io::format_double(a) + "," + io::format_double(b) + "," + io::format_double(t) + "," + std::to_string(h) +
           "," + int_name + "," + std::to_string(r) + ",";
  };
  std::vector<std::string> order;
  for (double a : grid.alpha)
    for (double b : grid.beta)
      for (double t : grid.tau)
        for (std::size_t h : grid.hidden)
          for (std::size_t r = 0; r < o.seeds; ++r) order.push_back(key(a, b, t, h, r));

  for (double a : grid.alpha)
    for (std::size_t h : grid.hidden)
      for (std::size_t r = 0; r < o.seeds; ++r) {
        bool missing = false;
        for (double b : grid.beta)
          for (double t : grid.tau) missing = missing || !rows.count(key(a, b, t, h, r));
        if (!missing) continue;
        tcfg.alpha = a;
        tcfg.hidden = h;
        const std::uint64_t seed = run_seed(o.seed, r);
        const auto teachers = train_teachers(g, pool, strategy, tcfg, seed);
        for (double t : grid.tau) {
          const TeacherBundle bundle = freeze_and_export(g, teachers, t);
          for (double b : grid.beta) {
            if (rows.count(key(a, b, t, h, r))) continue;
            DistillConfig cfg = distill_config(kind, b, t, o.epochs, h, o.layers);
            cfg.seed = seed;
            const auto run = distill_student(g, bundle, cfg);
            rows[key(a, b, t, h, r)] = {io::format_double(a), io::format_double(b), io::format_double(t),
                                        std::to_string(h),    int_name,             std::to_string(r),
                                        fmt(run.report.val_acc), fmt(run.report.test_acc)};
            write_rows(o.out, header, order, rows);
          }
        }
      }
  write_rows(o.out, header, order, rows);

  double best_val = -1.0, best_test = 0.0;
  std::string best_cfg;
  for (double a : grid.alpha)
    for (double b : grid.beta)
      for (double t : grid.tau)
        for (std::size_t h : grid.hidden) {
          std::vector<double> vals, tests;
          for (std::size_t r = 0; r < o.seeds; ++r) {
            const auto& row = rows.at(key(a, b, t, h, r));
            if (!row[6].empty()) vals.push_back(io::parse_double(row[6]));
            if (!row[7].empty()) tests.push_back(io::parse_double(row[7]));
          }
          const double v = mean_std(vals).mean;
          if (v > best_val) {
            best_val = v;
            best_test = mean_std(tests).mean;
            best_cfg = "alpha=" + io::format_double(a) + " beta=" + io::format_double(b) +
                       " tau=" + io::format_double(t) + " hidden=" + std::to_string(h);
          }
        }
  std::printf("best by val accuracy: %s  val=%.4f test=%.4f\n", best_cfg.c_str(), best_val, best_test);
  return 0;
}

int cmd_sweep(const SweepOptions& o) {
  if (o.grid.empty() == !o.teacher_count) throw UsageError("give exactly one of --grid FILE or --teacher-count");
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  const auto pool = parse_tasks(o.tasks);
  const Strategy strategy = as_usage([&] { return parse_strategy(o.strategy); });
  TeacherOptions to;
  to.alpha = o.alpha;
  to.tau = o.tau;
  to.epochs = o.epochs;
  to.pretrain_epochs = o.pretrain_epochs;
  to.hidden = o.hidden;
  to.layers = o.layers;
  const TeacherConfig tcfg = teacher_config(to);
  if (o.teacher_count) {
    const Graph g = load_data(o.data);
    return sweep_teacher_count(o, g, pool, strategy, tcfg);
  }
  read_grid(o.grid, o);  // usage errors before the dataset is touched
  const Graph g = load_data(o.data);
  return sweep_grid(o, g, pool, strategy, tcfg);
}

// ---------------------------------------------------------------------------
// delta
// ---------------------------------------------------------------------------

struct DeltaOptions {
  std::string data, bundle, out;
  std::string targets = "onehot";
  std::string mode = "both";
  std::size_t k_max = 0;
};

Matrix read_posterior(const fs::path& path, std::size_t n, std::size_t c) {
  Matrix m(n, c);
  std::size_t i = 0;
  for (const auto& line : io::read_lines(path)) {
    if (io::trim(line).empty()) continue;
    if (i >= n) throw std::runtime_error("target file has more than N rows");
    const auto cells = io::split(line, ',');
    if (cells.size() != c) throw std::runtime_error("target file row " + std::to_string(i) + " has wrong width");
    for (std::size_t k = 0; k < c; ++k) m(i, k) = io::parse_double(io::trim(cells[k]));
    ++i;
  }
  if (i != n) throw std::runtime_error("target file has " + std::to_string(i) + " rows, expected " + std::to_string(n));
  return m;
}

int cmd_delta(const DeltaOptions& o) {
  std::vector<bool> modes;
  if (o.mode == "both") modes = {true, false};
  else if (o.mode == "constrained") modes = {true};
  else if (o.mode == "unconstrained") modes = {false};
  else throw UsageError("unknown mode: '" + o.mode + "' (expected constrained, unconstrained or both)");
  if (o.targets == "onehot" && o.data.empty()) throw UsageError("--targets onehot needs --data");

  const TeacherBundle bundle = load_bundle(o.bundle);
  const std::size_t n = bundle.num_nodes(), c = bundle.num_classes();
  Matrix targets(n, c);
  if (o.targets == "onehot") {
    const Graph g = load_data(o.data);
    check_bundle_matches(g, bundle);
    for (std::size_t i = 0; i < n; ++i) targets(i, static_cast<std::size_t>(g.labels()[i])) = 1.0;
  } else {
    targets = read_posterior(o.targets, n, c);
  }
  const std::size_t k_max = o.k_max == 0 ? bundle.num_teachers() : o.k_max;
  if (k_max > bundle.num_teachers()) throw UsageError("--k-max exceeds the bundle's teacher count");

  std::vector<Matrix> curves;
  for (bool constrained : modes) curves.push_back(delta_k_curve(bundle, targets, k_max, constrained));

  std::string text = "node,mode";
  for (std::size_t k = 1; k <= k_max; ++k) text += ",delta_" + std::to_string(k);
  text += "\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < modes.size(); ++m) {
      text += std::to_string(i) + (modes[m] ? ",constrained" : ",unconstrained");
      for (std::size_t k = 0; k < k_max; ++k) text += "," + io::format_double(curves[m](i, k));
      text += "\n";
    }
  io::write_file_atomic(o.out, text);

  for (std::size_t m = 0; m < modes.size(); ++m) {
    std::printf("%-14s", modes[m] ? "constrained" : "unconstrained");
    for (std::size_t k = 0; k < k_max; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += curves[m](i, k);
      std::printf(" K=%zu:%.6f", k + 1, s / static_cast<double>(n));
    }
    std::printf("\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string data, bundle, run, out;
  std::string boundaries = "1,4,7,10";
};

int cmd_eval(const EvalOptions& o) {
  std::vector<std::size_t> bounds;
  try {
    for (const auto& b : split_list(o.boundaries)) bounds.push_back(static_cast<std::size_t>(io::parse_int(b)));
  } catch (const std::exception& e) {
    throw UsageError(std::string("bad --boundaries: ") + e.what());
  }
  if (bounds.empty()) throw UsageError("--boundaries is empty");
  for (std::size_t b = 1; b < bounds.size(); ++b)
    if (bounds[b] <= bounds[b - 1]) throw UsageError("--boundaries must be strictly increasing");

  const Graph g = load_data(o.data);
  const TeacherBundle bundle = load_bundle(o.bundle);
  check_bundle_matches(g, bundle);
  auto task_name = [&](std::size_t k) {
    return k < bundle.tasks.size() ? std::string(to_string(bundle.tasks[k])) : std::to_string(k);
  };
  auto hi = [](std::size_t v) { return v == 0 ? std::string() : std::to_string(v); };

  const fs::path out(o.out);
  std::string acc = "task,split,accuracy\n";
  std::string deg = "task,bucket_lo,bucket_hi,count,accuracy\n";
  const auto& s = g.splits();
  for (std::size_t k = 0; k < bundle.num_teachers(); ++k) {
    const Matrix& l = bundle.logits[k];
    acc += task_name(k) + ",train," + fmt(accuracy(l, g.labels(), s.train)) + "\n";
    acc += task_name(k) + ",val," + fmt(accuracy(l, g.labels(), s.val)) + "\n";
    acc += task_name(k) + ",test," + fmt(accuracy(l, g.labels(), s.test)) + "\n";
    const auto da = per_degree_accuracy(l, g.labels(), g, bounds);
    for (std::size_t b = 0; b < bounds.size(); ++b)
      deg += task_name(k) + "," + std::to_string(da.bucket_lo[b]) + "," + hi(da.bucket_hi[b]) + "," +
             std::to_string(da.count[b]) + "," + fmt(da.accuracy[b]) + "\n";
  }
  io::write_file_atomic(out / "teacher_eval.csv", acc);
  io::write_file_atomic(out / "degree_accuracy.csv", deg);

  if (!o.run.empty()) {
    const auto table = io::read_csv(fs::path(o.run) / "weights.csv");
    if (table.rows.empty()) throw std::runtime_error("weights.csv has no rows");
    long long last = 0;
    for (const auto& r : table.rows) last = std::max(last, io::parse_int(r.at(0)));
    Matrix w(static_cast<std::size_t>(g.num_nodes()), bundle.num_teachers());
    for (const auto& r : table.rows) {
      if (io::parse_int(r.at(0)) != last) continue;
      const auto node = static_cast<std::size_t>(io::parse_int(r.at(1)));
      std::size_t k = 0;
      while (k < bundle.num_teachers() && task_name(k) != r.at(2)) ++k;
      if (node >= w.rows() || k == bundle.num_teachers())
        throw std::runtime_error("weights.csv does not match the bundle");
      w(node, k) = io::parse_double(r.at(3));
    }
    const Matrix mean = per_degree_mean_weights(w, g, bounds);
    std::string text = "bucket_lo,bucket_hi,task,weight\n";
    for (std::size_t b = 0; b < bounds.size(); ++b)
      for (std::size_t k = 0; k < mean.cols(); ++k)
        text += std::to_string(bounds[b]) + "," + (b + 1 < bounds.size() ? std::to_string(bounds[b + 1]) : "") + "," +
                task_name(k) + "," + fmt(mean(b, k)) + "\n";
    io::write_file_atomic(out / "degree_weights.csv", text);
  }
  std::cout << "wrote evaluation tables to " << o.out << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"Multi-teacher knowledge distillation for graph self-supervised learning", "agssl"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen", "generate a stochastic-block-model dataset");
  c_gen->add_option("--blocks", gen.blocks, "block sizes, SIZExCOUNT[,SIZExCOUNT...]")->required();
  c_gen->add_option("--p-in", gen.p_in, "intra-block edge probability")->required();
  c_gen->add_option("--p-out", gen.p_out, "inter-block edge probability")->required();
  c_gen->add_option("--dim", gen.dim, "feature dimension")->capture_default_str();
  c_gen->add_option("--mu", gen.mu, "class-mean offset on the class axis")->capture_default_str();
  c_gen->add_option("--sigma", gen.sigma, "feature noise standard deviation")->capture_default_str();
  c_gen->add_option("--train-rate", gen.train_rate)->capture_default_str();
  c_gen->add_option("--val-rate", gen.val_rate)->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_flag("--write-posterior", gen.write_posterior, "also write the exact feature posterior (posterior.csv)");

  TeacherOptions tt;
  auto* c_tt = app.add_subcommand("train-teachers", "train one teacher per pretext task and export a bundle");
  c_tt->add_option("--data", tt.data, "dataset directory")->required();
  c_tt->add_option("--out", tt.out, "bundle directory")->required();
  c_tt->add_option("--tasks", tt.tasks, "comma-separated subset of par,clu,dgi,pairdis,pairsim")->capture_default_str();
  c_tt->add_option("--strategy", tt.strategy, "jt or pf")->capture_default_str();
  c_tt->add_option("--alpha", tt.alpha)->capture_default_str();
  c_tt->add_option("--tau", tt.tau, "softening temperature")->capture_default_str();
  c_tt->add_option("--epochs", tt.epochs)->capture_default_str();
  c_tt->add_option("--pretrain-epochs", tt.pretrain_epochs)->capture_default_str();
  c_tt->add_option("--hidden", tt.hidden)->capture_default_str();
  c_tt->add_option("--layers", tt.layers)->capture_default_str();
  c_tt->add_option("--seed", tt.seed)->capture_default_str();

  DistillOptions ds;
  auto* c_ds = app.add_subcommand("distill", "train students from a teacher bundle");
  c_ds->add_option("--data", ds.data, "dataset directory")->required();
  c_ds->add_option("--bundle", ds.bundle, "bundle directory")->required();
  c_ds->add_option("--out", ds.out, "run directory")->required();
  c_ds->add_option("--integrator", ds.integrator, "random, average, weighted, lf or ts")->capture_default_str();
  c_ds->add_option("--beta", ds.beta)->capture_default_str();
  auto* tau_opt = c_ds->add_option("--tau", ds.tau, "temperature (default: the bundle's)");
  c_ds->add_option("--epochs", ds.epochs)->capture_default_str();
  c_ds->add_option("--seeds", ds.seeds, "number of repetitions")->capture_default_str();
  c_ds->add_option("--seed", ds.seed, "master seed")->capture_default_str();
  c_ds->add_option("--hidden", ds.hidden)->capture_default_str();
  c_ds->add_option("--layers", ds.layers)->capture_default_str();

  SweepOptions sw;
  auto* c_sw = app.add_subcommand("sweep", "hyperparameter grid or teacher-count sweep");
  c_sw->add_option("--data", sw.data, "dataset directory")->required();
  c_sw->add_option("--out", sw.out, "sweep.csv path")->required();
  c_sw->add_option("--grid", sw.grid, "grid file: alpha=..., beta=..., tau=..., hidden=...");
  c_sw->add_flag("--teacher-count", sw.teacher_count, "K = 1..|tasks| over task-pool prefixes");
  c_sw->add_option("--tasks", sw.tasks, "ordered task pool")->capture_default_str();
  c_sw->add_option("--strategy", sw.strategy)->capture_default_str();
  c_sw->add_option("--integrator", sw.integrator, "integrator for grid mode")->capture_default_str();
  c_sw->add_option("--integrators", sw.integrators, "integrators for teacher-count mode")->capture_default_str();
  c_sw->add_option("--alpha", sw.alpha)->capture_default_str();
  c_sw->add_option("--beta", sw.beta)->capture_default_str();
  c_sw->add_option("--tau", sw.tau)->capture_default_str();
  c_sw->add_option("--hidden", sw.hidden)->capture_default_str();
  c_sw->add_option("--layers", sw.layers)->capture_default_str();
  c_sw->add_option("--epochs", sw.epochs)->capture_default_str();
  c_sw->add_option("--pretrain-epochs", sw.pretrain_epochs)->capture_default_str();
  c_sw->add_option("--seeds", sw.seeds)->capture_default_str();
  c_sw->add_option("--seed", sw.seed)->capture_default_str();

  DeltaOptions dl;
  auto* c_dl = app.add_subcommand("delta", "approximation gap per node for K = 1..K_max");
  c_dl->add_option("--bundle", dl.bundle, "bundle directory")->required();
  c_dl->add_option("--data", dl.data, "dataset directory (for one-hot targets)");
  c_dl->add_option("--out", dl.out, "delta.csv path")->required();
  c_dl->add_option("--targets", dl.targets, "onehot or a posterior CSV (N rows × C)")->capture_default_str();
  c_dl->add_option("--mode", dl.mode, "constrained, unconstrained or both")->capture_default_str();
  c_dl->add_option("--k-max", dl.k_max, "largest K (default: all teachers)");

  EvalOptions ev;
  auto* c_ev = app.add_subcommand("eval", "teacher accuracy tables and per-degree breakdowns");
  c_ev->add_option("--data", ev.data, "dataset directory")->required();
  c_ev->add_option("--bundle", ev.bundle, "bundle directory")->required();
  c_ev->add_option("--run", ev.run, "distill run directory (adds degree_weights.csv)");
  c_ev->add_option("--out", ev.out, "output directory")->required();
  c_ev->add_option("--boundaries", ev.boundaries, "degree bucket lower bounds")->capture_default_str();

  std::vector<const char*> ptrs;
  for (const auto& a : args) ptrs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_gen) return cmd_gen(gen);
    if (*c_tt) return cmd_train_teachers(tt);
    if (*c_ds) {
      ds.tau_given = tau_opt->count() > 0;
      return cmd_distill(ds);
    }
    if (*c_sw) return cmd_sweep(sw);
    if (*c_dl) return cmd_delta(dl);
    if (*c_ev) return cmd_eval(ev);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace agssl::cli
