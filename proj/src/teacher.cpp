#include "agssl/teacher.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "agssl/io.hpp"
#include "agssl/parallel.hpp"
#include "agssl/report.hpp"
#include "agssl/rng.hpp"

namespace agssl {

using nlohmann::json;

std::string_view to_string(Strategy s) { return s == Strategy::JointTraining ? "jt" : "pf"; }

Strategy parse_strategy(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "jt") return Strategy::JointTraining;
  if (lower == "pf") return Strategy::PretrainFinetune;
  throw std::invalid_argument("unknown strategy: '" + std::string(name) + "' (expected jt or pf)");
}

namespace {

struct Snapshot {
  GcnEncoder encoder;
  Linear task_head;
  Linear ssl_head;
};

TeacherModel init_teacher(const Graph& g, const PretextTask& task, const TeacherConfig& cfg, Strategy strategy,
                          std::uint64_t seed) {
  if (cfg.alpha < 0.0 || !std::isfinite(cfg.alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
  if (cfg.epochs < 0 || cfg.pretrain_epochs < 0) throw std::invalid_argument("epoch counts must be >= 0");
  Rng rng(derive_seed(seed, {stream::kTeacherInit}));
  TeacherModel m;
  m.encoder = GcnEncoder::glorot(g.feature_dim(), cfg.hidden, cfg.layers, rng);
  m.task_head = Linear::glorot(cfg.hidden, static_cast<std::size_t>(g.num_classes()), rng);
  m.ssl_head = Linear::glorot(cfg.hidden, task.head_dim(), rng);
  m.task = task;
  m.strategy = strategy;
  m.seed = seed;
  return m;
}

void require_finite(double loss, const TeacherModel& m, int epoch) {
  if (!std::isfinite(loss))
    throw std::runtime_error("non-finite loss in " + std::string(to_string(m.task.kind)) + " teacher at epoch " +
                             std::to_string(epoch));
}

std::vector<Matrix*> ssl_params(TeacherModel& m) {
  return m.task.head_dim() == 0 ? std::vector<Matrix*>{} : m.ssl_head.parameters();
}

void append_ssl_grads(const TeacherModel& m, const SslGrad& ssl, double scale, std::vector<Matrix>& grads) {
  if (m.task.head_dim() == 0) return;
  grads.push_back(ssl.head.weight * scale);
  grads.push_back(ssl.head.bias * scale);
}

/// Supervised loop shared by JT (alpha may be > 0) and the P&F fine-tune
/// stage (alpha forced to 0). Keeps the best-validation snapshot.
void supervised_stage(const Graph& g, const NormalizedAdjacency& adj, TeacherModel& m, const TeacherConfig& cfg,
                      double alpha) {
  const Matrix& x = g.features();
  const auto& labels = g.labels();
  const auto& splits = g.splits();
  const bool use_ssl = alpha > 0.0;
  Adam adam(cfg.adam);
  std::vector<Matrix*> params = m.encoder.parameters();
  for (Matrix* p : m.task_head.parameters()) params.push_back(p);
  if (use_ssl)
    for (Matrix* p : ssl_params(m)) params.push_back(p);

  double best = -1.0;
  Snapshot snap;
  bool have_snap = false;
  const bool has_val = !splits.val.empty();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    GcnCache cache;
    const Matrix h = gcn_forward(adj, x, m.encoder, &cache);
    const Matrix logits = m.task_head.forward(h);
    auto ce = softmax_cross_entropy(logits, labels, splits.train);
    const double val = accuracy(logits, labels, splits.val);
    if (has_val && val > best) {
      best = val;
      snap = {m.encoder, m.task_head, m.ssl_head};
      have_snap = true;
      m.best_epoch = epoch;
    }

    Matrix d_h;
    const LinearGrad head_grad = linear_backward(m.task_head, h, ce.grad, &d_h);
    auto enc_grads = gcn_backward(adj, m.encoder, cache, d_h);
    double ssl_loss = 0.0;
    SslGrad ssl;
    if (use_ssl) {
      ssl = ssl_loss_and_grad(m.task, adj, x, m.encoder, cache, h, m.ssl_head,
                              derive_seed(m.seed, {stream::kTeacherEpoch, static_cast<std::uint64_t>(epoch)}));
      ssl_loss = ssl.loss;
      for (std::size_t l = 0; l < enc_grads.size(); ++l) enc_grads[l] += ssl.d_encoder[l] * alpha;
    }
    const double total = ce.loss + alpha * ssl_loss;
    require_finite(total, m, epoch);
    m.log.total_loss.push_back(total);
    m.log.task_loss.push_back(ce.loss);
    m.log.ssl_loss.push_back(ssl_loss);
    m.log.val_acc.push_back(val);

    std::vector<Matrix> grads = std::move(enc_grads);
    grads.push_back(head_grad.weight);
    grads.push_back(head_grad.bias);
    if (use_ssl) append_ssl_grads(m, ssl, alpha, grads);
    adam.step(params, grads);
  }

  const Matrix final_logits = m.task_head.forward(gcn_forward(adj, x, m.encoder));
  const double final_val = accuracy(final_logits, labels, splits.val);
  if (have_snap && !(final_val > best)) {
    m.encoder = std::move(snap.encoder);
    m.task_head = std::move(snap.task_head);
    m.ssl_head = std::move(snap.ssl_head);
    m.best_val_acc = best;
  } else {
    m.best_epoch = 0;
    m.best_val_acc = final_val;
  }
  m.trained = cfg.epochs > 0;
}

}  // namespace

TeacherModel train_teacher_jt(const Graph& g, const PretextTask& task, const TeacherConfig& cfg, std::uint64_t seed) {
  TeacherModel m = init_teacher(g, task, cfg, Strategy::JointTraining, seed);
  const Graph prop = propagation_graph(g, task);
  supervised_stage(prop, normalized_adjacency(prop), m, cfg, cfg.alpha);
  return m;
}

TeacherModel train_teacher_pf(const Graph& g, const PretextTask& task, const TeacherConfig& cfg, std::uint64_t seed) {
  TeacherModel m = init_teacher(g, task, cfg, Strategy::PretrainFinetune, seed);
  const Graph prop = propagation_graph(g, task);
  const NormalizedAdjacency adj = normalized_adjacency(prop);
  const Matrix& x = prop.features();

  Adam adam(cfg.adam);
  std::vector<Matrix*> params = m.encoder.parameters();
  for (Matrix* p : ssl_params(m)) params.push_back(p);
  for (int epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    GcnCache cache;
    const Matrix h = gcn_forward(adj, x, m.encoder, &cache);
    SslGrad ssl = ssl_loss_and_grad(m.task, adj, x, m.encoder, cache, h, m.ssl_head,
                                    derive_seed(seed, {stream::kTeacherEpoch, static_cast<std::uint64_t>(epoch)}));
    require_finite(ssl.loss, m, epoch);
    m.log.pretrain_loss.push_back(ssl.loss);
    std::vector<Matrix> grads = std::move(ssl.d_encoder);
    append_ssl_grads(m, ssl, 1.0, grads);
    adam.step(params, grads);
  }
  supervised_stage(prop, adj, m, cfg, 0.0);
  return m;
}

Matrix teacher_logits(const Graph& g, const TeacherModel& model) {
  const Graph prop = propagation_graph(g, model.task);
  return model.task_head.forward(gcn_forward(normalized_adjacency(prop), prop.features(), model.encoder));
}

std::vector<TeacherModel> train_teachers(const Graph& g, std::span<const TaskKind> kinds, Strategy strategy,
                                         const TeacherConfig& cfg, std::uint64_t master_seed) {
  for (std::size_t a = 0; a < kinds.size(); ++a)
    for (std::size_t b = a + 1; b < kinds.size(); ++b)
      if (kinds[a] == kinds[b]) throw std::invalid_argument("duplicate task: " + std::string(to_string(kinds[a])));
  std::vector<TeacherModel> out(kinds.size());
  parallel_for(kinds.size(), [&](std::size_t k) {
    const auto idx = static_cast<std::uint64_t>(task_index(kinds[k]));
    const PretextTask task = build_task(g, kinds[k], cfg.pretext, derive_seed(master_seed, {stream::kTaskTargets, idx}));
    const std::uint64_t seed = derive_seed(master_seed, {stream::kTeacherInit, idx});
    out[k] = strategy == Strategy::JointTraining ? train_teacher_jt(g, task, cfg, seed)
                                                 : train_teacher_pf(g, task, cfg, seed);
  });
  return out;
}

// ---------------------------------------------------------------------------

TeacherBundle TeacherBundle::prefix(std::size_t k) const {
  if (k < 1 || k > num_teachers()) throw std::invalid_argument("bundle prefix out of range");
  TeacherBundle b;
  b.logits.assign(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(k));
  b.soft.assign(soft.begin(), soft.begin() + static_cast<std::ptrdiff_t>(k));
  b.tau = tau;
  auto take = [k](const auto& v) { return std::decay_t<decltype(v)>(v.begin(), v.begin() + std::min(k, v.size())); };
  b.tasks = take(tasks);
  b.seeds = take(seeds);
  b.val_acc = take(val_acc);
  b.strategy = strategy;
  return b;
}

TeacherBundle make_bundle(std::vector<Matrix> logits, double tau) {
  if (logits.empty()) throw std::invalid_argument("bundle needs at least one teacher");
  for (const auto& l : logits) require_same_shape(l, logits.front(), "make_bundle");
  TeacherBundle b;
  b.tau = tau;
  for (const auto& l : logits) b.soft.push_back(softmax_rows(l, tau));
  b.logits = std::move(logits);
  return b;
}

TeacherBundle freeze_and_export(const Graph& g, std::span<const TeacherModel> models, double tau) {
  if (models.empty()) throw std::invalid_argument("no teachers to export");
  std::vector<Matrix> logits;
  for (const auto& m : models) {
    if (!m.trained)
      throw std::invalid_argument("cannot freeze untrained teacher (" + std::string(to_string(m.task.kind)) + ")");
    logits.push_back(teacher_logits(g, m));
  }
  TeacherBundle b = make_bundle(std::move(logits), tau);
  b.strategy = models.front().strategy;
  for (const auto& m : models) {
    if (m.strategy != b.strategy) throw std::invalid_argument("teachers trained with mixed strategies");
    b.tasks.push_back(m.task.kind);
    b.seeds.push_back(m.seed);
    b.val_acc.push_back(m.best_val_acc);
  }
  return b;
}

void save_bundle(const TeacherBundle& bundle, const std::filesystem::path& dir) {
  save_bundle(bundle, dir, json::object());
}

void save_bundle(const TeacherBundle& bundle, const std::filesystem::path& dir, const json& extra) {
  const std::size_t k = bundle.num_teachers(), n = bundle.num_nodes(), c = bundle.num_classes();
  std::vector<double> flat;
  flat.reserve(k * n * c);
  for (const auto& l : bundle.logits) flat.insert(flat.end(), l.values().begin(), l.values().end());
  const std::size_t shape[] = {k, n, c};
  io::write_file_atomic(dir / "logits.npy", io::encode_npy(flat, shape));

  json m;
  m["K"] = k;
  m["N"] = n;
  m["C"] = c;
  m["tau"] = bundle.tau;
  m["strategy"] = std::string(to_string(bundle.strategy));
  json tasks = json::array();
  for (TaskKind t : bundle.tasks) tasks.push_back(std::string(to_string(t)));
  m["tasks"] = tasks;
  m["seeds"] = bundle.seeds;
  m["val_acc"] = bundle.val_acc;
  for (const auto& [key, value] : extra.items()) m[key] = value;
  io::write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

TeacherBundle load_bundle(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw std::runtime_error("bad bundle manifest: " + std::string(e.what()));
  }
  std::vector<std::size_t> shape;
  const auto flat = io::decode_npy(io::read_file(dir / "logits.npy"), shape);
  if (shape.size() != 3 || shape[0] != m.at("K").get<std::size_t>() || shape[1] != m.at("N").get<std::size_t>() ||
      shape[2] != m.at("C").get<std::size_t>())
    throw std::runtime_error("bundle logits shape does not match manifest");
  std::vector<Matrix> logits;
  const std::size_t per = shape[1] * shape[2];
  for (std::size_t k = 0; k < shape[0]; ++k) {
    Matrix l(shape[1], shape[2]);
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(k * per),
              flat.begin() + static_cast<std::ptrdiff_t>((k + 1) * per), l.values().begin());
    logits.push_back(std::move(l));
  }
  TeacherBundle b = make_bundle(std::move(logits), m.at("tau").get<double>());
  b.strategy = parse_strategy(m.at("strategy").get<std::string>());
  for (const auto& t : m.at("tasks")) b.tasks.push_back(parse_task_kind(t.get<std::string>()));
  b.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& v : m.value("val_acc", json::array()))
    b.val_acc.push_back(v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN());
  return b;
}

}  // namespace agssl
