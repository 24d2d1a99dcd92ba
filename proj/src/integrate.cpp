#include "agssl/integrate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "agssl/distill.hpp"
#include "agssl/parallel.hpp"
#include "agssl/rng.hpp"

namespace agssl {

std::string_view to_string(IntegratorKind kind) {
  switch (kind) {
    case IntegratorKind::Random: return "random";
    case IntegratorKind::Average: return "average";
    case IntegratorKind::Weighted: return "weighted";
    case IntegratorKind::Lf: return "lf";
    case IntegratorKind::Ts: return "ts";
  }
  return "?";
}

IntegratorKind parse_integrator(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (IntegratorKind k : kAllIntegrators)
    if (to_string(k) == lower) return k;
  throw std::invalid_argument("unknown integrator: '" + std::string(name) + "'");
}

namespace {

void softmax_rows_inplace(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto p = softmax_temp(m.row(i), 1.0);
    std::copy(p.begin(), p.end(), m.row(i).begin());
  }
}

void check_soft(std::span<const Matrix> soft) {
  if (soft.empty()) throw std::invalid_argument("need at least one teacher");
  for (const auto& s : soft) require_same_shape(s, soft.front(), "teacher rows");
}

}  // namespace

Matrix weights_random(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("weights_random: K must be >= 1");
  Rng rng(seed);
  Matrix w(n, k);
  for (double& v : w.values()) v = rng.uniform();
  softmax_rows_inplace(w);
  return w;
}

Matrix weights_average(std::size_t n, std::size_t k) {
  if (k < 1) throw std::invalid_argument("weights_average: K must be >= 1");
  return Matrix(n, k, 1.0 / static_cast<double>(k));
}

Matrix weights_labeled_ce(const TeacherBundle& bundle, std::span<const int> labels, std::span<const NodeId> train) {
  if (train.empty()) throw std::invalid_argument("weights_labeled_ce: empty train split");
  const std::size_t k = bundle.num_teachers();
  Matrix w = weights_average(bundle.num_nodes(), k);
  std::vector<double> scores(k);
  for (NodeId i : train) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t t = 0; t < k; ++t)
      scores[t] = std::log(std::max(bundle.soft[t](row, static_cast<std::size_t>(labels[i])), kLogClamp));
    const auto p = softmax_temp(scores, 1.0);
    std::copy(p.begin(), p.end(), w.row(row).begin());
  }
  return w;
}

Matrix lf_scores(const Matrix& z, const LfParams& p) {
  if (p.mu.cols() != z.cols() || p.nu.cols() != z.cols() || p.nu.rows() != 1)
    throw std::invalid_argument("lf_scores: dimension mismatch");
  // ζ = z · (μ ⊙ ν)ᵀ
  Matrix scaled = p.mu;
  for (std::size_t k = 0; k < scaled.rows(); ++k)
    for (std::size_t c = 0; c < scaled.cols(); ++c) scaled(k, c) *= p.nu(0, c);
  return matmul_nt(z, scaled);
}

Matrix ts_scores(const Matrix& z, std::span<const Matrix> h, const TsParams& p) {
  if (p.w.rows() != z.cols() || p.w.cols() != z.cols()) throw std::invalid_argument("ts_scores: W must be C×C");
  const Matrix a = matmul_nt(z, p.w);  // rows W z_i
  Matrix out(z.rows(), h.size());
  for (std::size_t k = 0; k < h.size(); ++k) {
    require_same_shape(h[k], z, "ts_scores");
    const Matrix b = matmul_nt(h[k], p.w);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) * b(i, c);
      out(i, k) = s;
    }
  }
  return out;
}

Matrix weights_lf(const Matrix& z, const LfParams& p) {
  Matrix w = lf_scores(z, p);
  softmax_rows_inplace(w);
  return w;
}

Matrix weights_ts(const Matrix& z, std::span<const Matrix> h, const TsParams& p) {
  Matrix w = ts_scores(z, h, p);
  softmax_rows_inplace(w);
  return w;
}

Matrix integrate(std::span<const Matrix> soft, const Matrix& weights) {
  check_soft(soft);
  if (weights.rows() != soft.front().rows() || weights.cols() != soft.size())
    throw std::invalid_argument("integrate: weights must be N×K");
  Matrix pt = soft.front();
  for (std::size_t k = 1; k < soft.size(); ++k)
    for (std::size_t i = 0; i < pt.rows(); ++i) {
      const double lam = weights(i, k);
      auto dst = pt.row(i);
      auto hk = soft[k].row(i);
      auto h1 = soft.front().row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += lam * (hk[c] - h1[c]);
    }
  for (double& v : pt.values()) v = std::max(v, 0.0);
  return pt;
}

double lw_loss(const Matrix& pt, std::span<const int> labels, std::span<const NodeId> train) {
  if (train.empty()) return 0.0;
  double s = 0.0;
  for (NodeId i : train) s -= std::log(std::max(pt(static_cast<std::size_t>(i), static_cast<std::size_t>(labels[i])), kLogClamp));
  return s / static_cast<double>(train.size());
}

LossGrad lw_loss_score_grad(std::span<const Matrix> soft, const Matrix& weights, std::span<const int> labels,
                            std::span<const NodeId> train) {
  const Matrix pt = integrate(soft, weights);
  LossGrad out{lw_loss(pt, labels, train), Matrix(weights.rows(), weights.cols())};
  if (train.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(train.size());
  const std::size_t k = soft.size();
  std::vector<double> d_lambda(k);
  for (NodeId node : train) {
    const auto i = static_cast<std::size_t>(node);
    const auto y = static_cast<std::size_t>(labels[node]);
    const double py = pt(i, y);
    if (py <= kLogClamp) continue;
    double mean = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      d_lambda[t] = -inv_n * soft[t](i, y) / py;
      mean += weights(i, t) * d_lambda[t];
    }
    for (std::size_t t = 0; t < k; ++t) out.grad(i, t) = weights(i, t) * (d_lambda[t] - mean);
  }
  return out;
}

LfGrad lf_backward(const Matrix& z, const LfParams& p, const Matrix& d_scores) {
  // dμ[k,c] = ν_c Σ_i dζ[i,k] z[i,c];  dν_c = Σ_k μ[k,c] Σ_i dζ[i,k] z[i,c]
  const Matrix s = matmul_tn(d_scores, z);  // K×C
  LfGrad g{Matrix(p.mu.rows(), p.mu.cols()), Matrix(1, p.nu.cols())};
  for (std::size_t k = 0; k < s.rows(); ++k)
    for (std::size_t c = 0; c < s.cols(); ++c) {
      g.mu(k, c) = p.nu(0, c) * s(k, c);
      g.nu(0, c) += p.mu(k, c) * s(k, c);
    }
  return g;
}

Matrix ts_backward(const Matrix& z, std::span<const Matrix> h, const TsParams& p, const Matrix& d_scores) {
  // ∂ζ/∂W = (W h) zᵀ + (W z) hᵀ
  const std::size_t c = p.w.rows();
  const Matrix a = matmul_nt(z, p.w);
  Matrix dw(c, c);
  for (std::size_t k = 0; k < h.size(); ++k) {
    const Matrix b = matmul_nt(h[k], p.w);
    Matrix sb = b, sa = a;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const double d = d_scores(i, k);
      for (double& v : sb.row(i)) v *= d;
      for (double& v : sa.row(i)) v *= d;
    }
    dw += matmul_tn(sb, z);
    dw += matmul_tn(sa, h[k]);
  }
  return dw;
}

// ---------------------------------------------------------------------------

GammaLearner::GammaLearner(IntegratorKind kind, std::size_t n_teachers, std::size_t n_classes, std::uint64_t seed,
                           AdamConfig adam)
    : kind_(kind), adam_(adam) {
  if (!is_learned(kind)) throw std::invalid_argument("GammaLearner needs the lf or ts integrator");
  Rng rng(derive_seed(seed, {stream::kGammaInit}));
  if (kind == IntegratorKind::Lf) {
    lf.mu = Matrix(n_teachers, n_classes);
    lf.nu = glorot_uniform(1, n_classes, rng);
  } else {
    ts.w = Matrix(n_classes, n_classes);
    for (double& v : ts.w.values()) v = rng.uniform(-0.1, 0.1);
  }
}

Matrix GammaLearner::weights(const Matrix& z, const TeacherBundle& bundle) const {
  if (bundle.num_teachers() == 1) return Matrix(z.rows(), 1, 1.0);
  return kind_ == IntegratorKind::Lf ? weights_lf(z, lf) : weights_ts(z, bundle.logits, ts);
}

double GammaLearner::loss_and_grad(const Matrix& z, const TeacherBundle& bundle, std::span<const int> labels,
                                   std::span<const NodeId> train, std::vector<Matrix>* grads) const {
  const Matrix w = kind_ == IntegratorKind::Lf ? weights_lf(z, lf) : weights_ts(z, bundle.logits, ts);
  auto lg = lw_loss_score_grad(bundle.soft, w, labels, train);
  if (grads) {
    grads->clear();
    if (kind_ == IntegratorKind::Lf) {
      auto g = lf_backward(z, lf, lg.grad);
      grads->push_back(std::move(g.mu));
      grads->push_back(std::move(g.nu));
    } else {
      grads->push_back(ts_backward(z, bundle.logits, ts, lg.grad));
    }
  }
  return lg.loss;
}

double GammaLearner::step(const Matrix& z, const TeacherBundle& bundle, std::span<const int> labels,
                          std::span<const NodeId> train) {
  std::vector<Matrix> grads;
  const double loss = loss_and_grad(z, bundle, labels, train, &grads);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite L_W in integrator training");
  adam_.step(parameters(), grads);
  return loss;
}

std::vector<Matrix*> GammaLearner::parameters() {
  if (kind_ == IntegratorKind::Lf) return {&lf.mu, &lf.nu};
  return {&ts.w};
}

GammaTrainResult train_gamma(IntegratorKind kind, const Matrix& z, const TeacherBundle& bundle,
                             std::span<const int> labels, const Splits& splits, int epochs, AdamConfig adam,
                             std::uint64_t seed) {
  if (splits.train.empty()) throw std::invalid_argument("train_gamma: empty train split");
  GammaTrainResult out{GammaLearner(kind, bundle.num_teachers(), bundle.num_classes(), seed, adam), {}, {}, 0};
  GammaLearner best = out.learner;
  double best_score = std::numeric_limits<double>::infinity();
  const bool use_val = !splits.val.empty();
  for (int s = 0; s <= epochs; ++s) {
    const Matrix pt = integrate(bundle.soft, out.learner.weights(z, bundle));
    const double lw = lw_loss(pt, labels, splits.train);
    const double score = use_val ? mse_to_onehot(pt, labels, splits.val) : lw;
    if (score < best_score) {
      best_score = score;
      best = out.learner;
      out.best_step = s;
    }
    if (s == epochs) break;
    out.train_lw.push_back(lw);
    if (use_val) out.val_mse.push_back(score);
    out.learner.step(z, bundle, labels, splits.train);
  }
  out.learner = std::move(best);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> project_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

namespace {

constexpr std::size_t kExactFaceLimit = 10;

double residual_sq(const Matrix& rows, std::span<const double> lambda, std::span<const double> target,
                   std::vector<double>* r_out = nullptr) {
  std::vector<double> r(target.size());
  for (std::size_t c = 0; c < r.size(); ++c) r[c] = -target[c];
  for (std::size_t k = 0; k < rows.rows(); ++k)
    for (std::size_t c = 0; c < r.size(); ++c) r[c] += lambda[k] * rows(k, c);
  double s = 0.0;
  for (double v : r) s += v * v;
  if (r_out) *r_out = std::move(r);
  return s;
}

// Exact minimizer over the simplex for small K: the optimum is the
// affine-constrained least-squares solution on one face, so every face is
// solved and the best feasible one kept.
void polish_on_faces(const Matrix& rows, std::span<const double> target, double& best, std::vector<double>& lambda) {
  const std::size_t k = rows.rows(), c = target.size();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    std::vector<std::size_t> face;
    for (std::size_t t = 0; t < k; ++t)
      if (mask & (1u << t)) face.push_back(t);
    const auto m = static_cast<Eigen::Index>(face.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) {
        double g = 0.0;
        for (std::size_t q = 0; q < c; ++q) g += rows(face[a], q) * rows(face[b], q);
        kkt(a, b) = 2.0 * g;
      }
      double hp = 0.0;
      for (std::size_t q = 0; q < c; ++q) hp += rows(face[a], q) * target[q];
      rhs(a) = 2.0 * hp;
      kkt(a, m) = kkt(m, a) = 1.0;
    }
    rhs(m) = 1.0;
    const Eigen::VectorXd x = kkt.completeOrthogonalDecomposition().solve(rhs);
    std::vector<double> cand(k, 0.0);
    bool feasible = true;
    for (Eigen::Index a = 0; a < m; ++a) {
      if (!(x(a) >= -1e-12)) feasible = false;
      cand[face[a]] = x(a);
    }
    if (!feasible) continue;
    cand = project_simplex(cand);
    const double f = residual_sq(rows, cand, target);
    if (f < best) {
      best = f;
      lambda = std::move(cand);
    }
  }
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

}  // namespace

DeltaResult delta_k(const Matrix& rows, std::span<const double> target, bool constrained,
                    std::span<const double> start) {
  const std::size_t k = rows.rows();
  if (k < 1) throw std::invalid_argument("delta_k: need at least one teacher row");
  if (rows.cols() != target.size()) throw std::invalid_argument("delta_k: row/target length mismatch");
  DeltaResult out;
  const Eigen::MatrixXd h = to_eigen(rows);

  if (!constrained) {
    Eigen::VectorXd p(target.size());
    for (std::size_t c = 0; c < target.size(); ++c) p(c) = target[c];
    const Eigen::MatrixXd a = h * h.transpose() + 1e-10 * Eigen::MatrixXd::Identity(k, k);
    const Eigen::VectorXd b = h * p;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    Eigen::VectorXd x = ldlt.solve(b);
    for (int it = 0; it < 3; ++it) x += ldlt.solve(b - a * x);
    out.lambda.assign(x.data(), x.data() + k);
    out.delta = std::sqrt(residual_sq(rows, out.lambda, target));
    return out;
  }

  std::vector<double> lambda;
  if (start.empty()) {
    lambda.assign(k, 1.0 / static_cast<double>(k));
  } else {
    if (start.size() != k) throw std::invalid_argument("delta_k: start has wrong length");
    lambda = project_simplex(start);
  }
  const double smax = k == 1 && rows.cols() == 0 ? 0.0 : Eigen::JacobiSVD<Eigen::MatrixXd>(h).singularValues()(0);
  const double lip = 2.0 * smax * smax;
  std::vector<double> r;
  double best = residual_sq(rows, lambda, target, &r);
  out.lambda = lambda;
  if (lip > 0.0 && k > 1) {
    std::vector<double> next(k);
    for (int it = 0; it < 1000; ++it) {
      for (std::size_t t = 0; t < k; ++t) {
        double g = 0.0;
        for (std::size_t c = 0; c < r.size(); ++c) g += rows(t, c) * r[c];
        next[t] = lambda[t] - 2.0 * g / lip;
      }
      lambda = project_simplex(next);
      const double f = residual_sq(rows, lambda, target, &r);
      if (f < best) {
        best = f;
        out.lambda = lambda;
      }
    }
  }
  if (k > 1 && k <= kExactFaceLimit) polish_on_faces(rows, target, best, out.lambda);
  out.delta = std::sqrt(best);
  return out;
}

Matrix delta_k_curve(const TeacherBundle& bundle, const Matrix& targets, std::size_t k_max, bool constrained) {
  if (k_max < 1 || k_max > bundle.num_teachers()) throw std::invalid_argument("delta_k_curve: k_max out of range");
  require_same_shape(targets, bundle.soft.front(), "delta_k_curve targets");
  const std::size_t n = targets.rows(), c = targets.cols();
  Matrix out(n, k_max);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> warm;
    for (std::size_t k = 1; k <= k_max; ++k) {
      Matrix rows(k, c);
      for (std::size_t t = 0; t < k; ++t) std::copy(bundle.soft[t].row(i).begin(), bundle.soft[t].row(i).end(), rows.row(t).begin());
      if (!warm.empty()) warm.push_back(0.0);
      auto res = delta_k(rows, targets.row(i), constrained, warm);
      out(i, k - 1) = res.delta;
      warm = std::move(res.lambda);
    }
  });
  return out;
}

CauchySchwarz prop1_inequality_check(const Matrix& pt, const Matrix& pstar, const Matrix& losses) {
  require_same_shape(pt, pstar, "prop1_inequality_check");
  require_same_shape(pt, losses, "prop1_inequality_check");
  if (pt.rows() == 0) return {};
  double dot_sum = 0.0, norm_sum = 0.0;
  for (std::size_t i = 0; i < pt.rows(); ++i) {
    double dot = 0.0, dd = 0.0, ll = 0.0;
    for (std::size_t c = 0; c < pt.cols(); ++c) {
      const double d = pt(i, c) - pstar(i, c);
      dot += d * losses(i, c);
      dd += d * d;
      ll += losses(i, c) * losses(i, c);
    }
    dot_sum += dot;
    norm_sum += std::sqrt(dd) * std::sqrt(ll);
  }
  const double n = static_cast<double>(pt.rows());
  return {(dot_sum / n) * (dot_sum / n), (norm_sum / n) * (norm_sum / n)};
}

}  // namespace agssl
