#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "agssl/graph.hpp"
#include "agssl/nn.hpp"
#include "agssl/teacher.hpp"

namespace agssl {

enum class IntegratorKind { Random, Average, Weighted, Lf, Ts };

inline constexpr IntegratorKind kAllIntegrators[] = {IntegratorKind::Random, IntegratorKind::Average,
                                                     IntegratorKind::Weighted, IntegratorKind::Lf, IntegratorKind::Ts};

/// "random", "average", "weighted", "lf", "ts".
std::string_view to_string(IntegratorKind kind);
IntegratorKind parse_integrator(std::string_view name);
/// lf and ts carry trainable parameters.
constexpr bool is_learned(IntegratorKind kind) { return kind == IntegratorKind::Lf || kind == IntegratorKind::Ts; }

// ---------------------------------------------------------------------------
// Weights. Every function returns an N×K matrix whose rows lie on the simplex.
// ---------------------------------------------------------------------------

/// uniform[0,1) draws followed by a row softmax.
Matrix weights_random(std::size_t n, std::size_t k, std::uint64_t seed);
Matrix weights_average(std::size_t n, std::size_t k);
/// softmax_k(-CE(e_y, soft_k)) on `train` nodes, 1/K elsewhere.
Matrix weights_labeled_ce(const TeacherBundle& bundle, std::span<const int> labels, std::span<const NodeId> train);

struct LfParams {
  Matrix mu;  ///< K×C, one latent factor per teacher
  Matrix nu;  ///< 1×C
};

struct TsParams {
  Matrix w;  ///< C×C
};

/// ζ[i,k] = νᵀ(μ_k ⊙ z_i)
Matrix lf_scores(const Matrix& student_logits, const LfParams& p);
/// ζ[i,k] = (W z_i)ᵀ (W h_i^k) with h the raw teacher logits.
Matrix ts_scores(const Matrix& student_logits, std::span<const Matrix> teacher_logits, const TsParams& p);

Matrix weights_lf(const Matrix& student_logits, const LfParams& p);
Matrix weights_ts(const Matrix& student_logits, std::span<const Matrix> teacher_logits, const TsParams& p);

/// p^t rows: Σ_k λ[i,k] soft_k[i]. Evaluated as soft_1 + Σ_{k≥2} λ_k (soft_k − soft_1),
/// so K = 1 and K identical teachers reproduce soft_1 exactly.
Matrix integrate(std::span<const Matrix> soft, const Matrix& weights);

/// L_W = -(1/|train|) Σ log p^t[i, y_i].
double lw_loss(const Matrix& pt, std::span<const int> labels, std::span<const NodeId> train);

/// L_W and its gradient wrt the scores ζ (N×K) that produced `weights` by row softmax.
LossGrad lw_loss_score_grad(std::span<const Matrix> soft, const Matrix& weights, std::span<const int> labels,
                            std::span<const NodeId> train);

struct LfGrad {
  Matrix mu;
  Matrix nu;
};
LfGrad lf_backward(const Matrix& student_logits, const LfParams& p, const Matrix& d_scores);

Matrix ts_backward(const Matrix& student_logits, std::span<const Matrix> teacher_logits, const TsParams& p,
                   const Matrix& d_scores);

/// Trainable integration parameters γ for lf / ts. The student logits are
/// inputs only; γ is trained by L_W alone.
class GammaLearner {
 public:
  /// lf: μ = 0, ν Glorot-uniform (so training starts from uniform weights).
  /// ts: W uniform in ±0.1.
  GammaLearner(IntegratorKind kind, std::size_t n_teachers, std::size_t n_classes, std::uint64_t seed,
               AdamConfig adam);

  IntegratorKind kind() const noexcept { return kind_; }
  Matrix weights(const Matrix& student_logits, const TeacherBundle& bundle) const;

  /// L_W at the current parameters and its gradient wrt γ.
  double loss_and_grad(const Matrix& student_logits, const TeacherBundle& bundle, std::span<const int> labels,
                       std::span<const NodeId> train, std::vector<Matrix>* grads) const;

  /// One Adam step; returns L_W before the step.
  double step(const Matrix& student_logits, const TeacherBundle& bundle, std::span<const int> labels,
              std::span<const NodeId> train);

  std::vector<Matrix*> parameters();

  LfParams lf;
  TsParams ts;

 private:
  IntegratorKind kind_;
  Adam adam_;
};

struct GammaTrainResult {
  GammaLearner learner;
  std::vector<double> train_lw;  ///< L_W before each step
  std::vector<double> val_mse;   ///< MSE(p^t, one-hot) on val before each step
  int best_step = 0;             ///< number of steps applied in the kept snapshot
};

/// Adam on γ only, minimizing L_W on the train split, for `epochs` steps.
/// Keeps the snapshot with the lowest validation MSE (train L_W when the
/// validation split is empty).
GammaTrainResult train_gamma(IntegratorKind kind, const Matrix& student_logits, const TeacherBundle& bundle,
                             std::span<const int> labels, const Splits& splits, int epochs, AdamConfig adam,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Approximation gap Δ(K)
// ---------------------------------------------------------------------------

/// Euclidean projection onto the probability simplex (sort-based).
std::vector<double> project_simplex(std::span<const double> v);

struct DeltaResult {
  double delta = 0.0;
  std::vector<double> lambda;
};

/// min ‖Σ_k λ_k rows_k − target‖₂ with rows K×C. Constrained: λ on the
/// simplex, 1000 projected-gradient steps of size 1/L, L = 2σ_max²,
/// starting from `start` (uniform when empty); the best iterate is kept.
/// For K <= 10 the result is then refined by an exact solve on every face.
/// Unconstrained: normal equations with ridge 1e-10.
DeltaResult delta_k(const Matrix& rows, std::span<const double> target, bool constrained,
                    std::span<const double> start = {});

/// Per node Δ(1..k_max) from the first K teachers (N × k_max). Constrained
/// solves warm-start from the previous prefix's optimum padded with 0.
Matrix delta_k_curve(const TeacherBundle& bundle, const Matrix& targets, std::size_t k_max, bool constrained);

struct CauchySchwarz {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// lhs = (mean_i (p^t_i − p*_i)ᵀ l_i)², rhs = (mean_i ‖p^t_i − p*_i‖ ‖l_i‖)².
CauchySchwarz prop1_inequality_check(const Matrix& pt, const Matrix& pstar, const Matrix& losses);

}  // namespace agssl
