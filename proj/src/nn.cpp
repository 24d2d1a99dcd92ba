#include "agssl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace agssl {

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-a, a);
  return w;
}

GcnEncoder GcnEncoder::glorot(std::size_t in_dim, std::size_t hidden, std::size_t layers, Rng& rng) {
  if (layers < 1 || layers > 2) throw std::invalid_argument("GCN layer count must be 1 or 2");
  if (in_dim == 0 || hidden == 0) throw std::invalid_argument("GCN dimensions must be positive");
  GcnEncoder enc;
  enc.weights.push_back(glorot_uniform(in_dim, hidden, rng));
  if (layers == 2) enc.weights.push_back(glorot_uniform(hidden, hidden, rng));
  return enc;
}

std::vector<Matrix*> GcnEncoder::parameters() {
  std::vector<Matrix*> out;
  for (auto& w : weights) out.push_back(&w);
  return out;
}

Matrix gcn_forward(const NormalizedAdjacency& adj, const Matrix& x, const GcnEncoder& enc, GcnCache* cache) {
  if (enc.weights.empty()) throw std::invalid_argument("empty GCN encoder");
  if (x.cols() != enc.in_dim()) throw std::invalid_argument("gcn_forward: feature dim does not match W0");
  if (cache) {
    cache->propagated.clear();
    cache->outputs.clear();
  }
  Matrix h = x;
  for (const Matrix& w : enc.weights) {
    Matrix prop = adj.multiply(h);
    h = matmul(prop, w);
    for (double& v : h.values()) v = std::max(v, 0.0);
    if (cache) {
      cache->propagated.push_back(std::move(prop));
      cache->outputs.push_back(h);
    }
  }
  return h;
}

std::vector<Matrix> gcn_backward(const NormalizedAdjacency& adj, const GcnEncoder& enc, const GcnCache& cache,
                                 const Matrix& d_out) {
  const std::size_t layers = enc.layers();
  if (cache.outputs.size() != layers) throw std::invalid_argument("gcn_backward: cache does not match encoder");
  std::vector<Matrix> grads(layers);
  Matrix upstream = d_out;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& out = cache.outputs[l];
    require_same_shape(upstream, out, "gcn_backward");
    for (std::size_t i = 0; i < upstream.size(); ++i)
      if (out.values()[i] <= 0.0) upstream.values()[i] = 0.0;
    grads[l] = matmul_tn(cache.propagated[l], upstream);
    if (l > 0) upstream = adj.multiply(matmul_nt(upstream, enc.weights[l]));
  }
  return grads;
}

Linear Linear::glorot(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  return Linear{glorot_uniform(in_dim, out_dim, rng), Matrix(1, out_dim)};
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = matmul(x, weight);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
  return y;
}

std::vector<Matrix*> Linear::parameters() { return {&weight, &bias}; }

LinearGrad linear_backward(const Linear& layer, const Matrix& x, const Matrix& d_out, Matrix* d_x) {
  if (d_out.cols() != layer.out_dim() || d_out.rows() != x.rows())
    throw std::invalid_argument("linear_backward: shape mismatch");
  LinearGrad g{matmul_tn(x, d_out), Matrix(1, layer.out_dim())};
  for (std::size_t i = 0; i < d_out.rows(); ++i)
    for (std::size_t j = 0; j < d_out.cols(); ++j) g.bias(0, j) += d_out(i, j);
  if (d_x) *d_x = matmul_nt(d_out, layer.weight);
  return g;
}

// ---------------------------------------------------------------------------

std::vector<double> softmax_temp(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += out[i] = std::exp((logits[i] - mx) / tau);
  for (double& v : out) v /= total;
  return out;
}

Matrix softmax_rows(const Matrix& logits, double tau) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax_temp(logits.row(i), tau);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

double cross_entropy_row(std::span<const double> targets, std::span<const double> probs) {
  if (targets.size() != probs.size()) throw std::invalid_argument("cross_entropy_row: length mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < targets.size(); ++c)
    if (targets[c] != 0.0) s -= targets[c] * std::log(std::max(probs[c], kLogClamp));
  return s;
}

double cross_entropy(const Matrix& probs, const Matrix& targets) {
  require_same_shape(probs, targets, "cross_entropy");
  if (probs.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) s += cross_entropy_row(targets.row(i), probs.row(i));
  return s / static_cast<double>(probs.rows());
}

double entropy_row(std::span<const double> p) {
  double s = 0.0;
  for (double v : p)
    if (v > 0.0) s -= v * std::log(std::max(v, kLogClamp));
  return s;
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_div: length mismatch");
  double s = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c)
    if (p[c] > 0.0) s += p[c] * (std::log(std::max(p[c], kLogClamp)) - std::log(std::max(q[c], kLogClamp)));
  return s;
}

LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> rows) {
  if (labels.size() != logits.rows()) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  LossGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  if (rows.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (NodeId i : rows) {
    const auto p = softmax_temp(logits.row(static_cast<std::size_t>(i)), 1.0);
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    out.loss -= std::log(std::max(p[y], kLogClamp));
    auto g = out.grad.row(static_cast<std::size_t>(i));
    for (std::size_t c = 0; c < p.size(); ++c) g[c] += p[c] * inv_n;
    g[y] -= inv_n;
  }
  out.loss *= inv_n;
  return out;
}

LossGrad bce_with_logits(const Matrix& logits, std::span<const double> targets) {
  if (logits.cols() != 1 || logits.rows() != targets.size()) throw std::invalid_argument("bce_with_logits: shape mismatch");
  LossGrad out{0.0, Matrix(logits.rows(), 1)};
  if (targets.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double x = logits(i, 0);
    const double t = targets[i];
    // softplus(x) - t·x, stable for both signs
    out.loss += std::max(x, 0.0) - t * x + std::log1p(std::exp(-std::abs(x)));
    const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    out.grad(i, 0) = (sig - t) * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

// ---------------------------------------------------------------------------

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter set changed between steps");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    require_same_shape(p, grads[k], "adam");
    require_same_shape(p, m_[k], "adam");
    auto pv = p.values();
    auto gv = grads[k].values();
    auto mv = m_[k].values();
    auto vv = v_[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double g = gv[i] + cfg_.weight_decay * pv[i];
      mv[i] = cfg_.beta1 * mv[i] + (1.0 - cfg_.beta1) * g;
      vv[i] = cfg_.beta2 * vv[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<double()>& loss, std::span<Matrix* const> params, std::span<const Matrix> analytic,
                  const GradCheckOptions& opts) {
  if (params.size() != analytic.size()) throw std::invalid_argument("grad_check: parameter/gradient count mismatch");
  Rng rng(opts.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    require_same_shape(p, analytic[k], "grad_check");
    const auto coords = rng.sample_without_replacement(p.size(), opts.max_coords_per_param);
    for (std::size_t idx : coords) {
      double& slot = p.values()[idx];
      const double saved = slot;
      slot = saved + opts.eps;
      const double up = loss();
      slot = saved - opts.eps;
      const double down = loss();
      slot = saved;
      const double fd = (up - down) / (2.0 * opts.eps);
      const double ga = analytic[k].values()[idx];
      const double denom = std::max({1.0, std::abs(ga), std::abs(fd)});
      worst = std::max(worst, std::abs(ga - fd) / denom);
    }
  }
  return worst;
}

}  // namespace agssl
