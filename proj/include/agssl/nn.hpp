#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/rng.hpp"
#include "agssl/tensor.hpp"

namespace agssl {

inline constexpr double kLogClamp = 1e-12;

/// Glorot-uniform init, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// GCN encoder
// ---------------------------------------------------------------------------

/// H₀ = X, H_{l+1} = ReLU(Â H_l W_l). One or two layers, no bias.
struct GcnEncoder {
  std::vector<Matrix> weights;

  static GcnEncoder glorot(std::size_t in_dim, std::size_t hidden, std::size_t layers, Rng& rng);

  std::size_t layers() const noexcept { return weights.size(); }
  std::size_t in_dim() const { return weights.front().rows(); }
  std::size_t out_dim() const { return weights.back().cols(); }

  std::vector<Matrix*> parameters();
  bool operator==(const GcnEncoder&) const = default;
};

/// Intermediate values kept for the backward pass.
struct GcnCache {
  std::vector<Matrix> propagated;  ///< Â H_l for each layer
  std::vector<Matrix> outputs;     ///< H_{l+1}
};

Matrix gcn_forward(const NormalizedAdjacency& adj, const Matrix& x, const GcnEncoder& enc, GcnCache* cache = nullptr);

/// Gradient of the loss wrt each W_l given dL/dH at the encoder output.
std::vector<Matrix> gcn_backward(const NormalizedAdjacency& adj, const GcnEncoder& enc, const GcnCache& cache,
                                 const Matrix& d_out);

// ---------------------------------------------------------------------------
// Linear head
// ---------------------------------------------------------------------------

struct Linear {
  Matrix weight;  ///< in × out
  Matrix bias;    ///< 1 × out

  static Linear glorot(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
  Matrix forward(const Matrix& x) const;
  std::vector<Matrix*> parameters();
  bool operator==(const Linear&) const = default;
};

struct LinearGrad {
  Matrix weight;
  Matrix bias;
};

/// Parameter gradients for y = xW + b; also writes dL/dx when d_x is given.
LinearGrad linear_backward(const Linear& layer, const Matrix& x, const Matrix& d_out, Matrix* d_x = nullptr);

// ---------------------------------------------------------------------------
// Probabilities and losses
// ---------------------------------------------------------------------------

/// softmax(logits / tau) with max subtraction. Throws for tau <= 0.
std::vector<double> softmax_temp(std::span<const double> logits, double tau);
Matrix softmax_rows(const Matrix& logits, double tau = 1.0);

/// Mean over rows of -Σ_c t_c log max(p_c, 1e-12).
double cross_entropy(const Matrix& probs, const Matrix& targets);
/// -Σ_c t_c log max(q_c, 1e-12)
double cross_entropy_row(std::span<const double> targets, std::span<const double> probs);
double entropy_row(std::span<const double> p);
/// KL(p ‖ q) = Σ p log(p/q); expectation under the first argument.
double kl_div(std::span<const double> p, std::span<const double> q);

struct LossGrad {
  double loss = 0.0;
  Matrix grad;  ///< dL/d(input), same shape as the input
};

/// Mean softmax cross-entropy of logits rows `rows` against integer labels.
/// The gradient is zero on rows outside `rows`.
LossGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> rows);

/// Mean binary cross-entropy with logits; logits is n × 1.
LossGrad bce_with_logits(const Matrix& logits, std::span<const double> targets);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

/// Adam with bias correction. Weight decay enters as an L2 term added to the
/// gradient (grad += wd * param). Moments are allocated on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

  long steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates probed per parameter matrix; all of them when the matrix is smaller.
  std::size_t max_coords_per_param = 64;
  std::uint64_t seed = 0;
};

/// Central differences of `loss` against `analytic`, probing coordinates of
/// `params` in place (each probe is restored). Returns the max over probed
/// coordinates of |g_a - g_fd| / max(1, |g_a|, |g_fd|).
double grad_check(const std::function<double()>& loss, std::span<Matrix* const> params,
                  std::span<const Matrix> analytic, const GradCheckOptions& opts = {});

}  // namespace agssl
