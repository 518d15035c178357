#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memcap/linalg.hpp"

namespace memcap {

enum class KernelKind { Linear, Rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double gamma = 1.0;  // RBF: k(x, z) = exp(-gamma * ||x - z||^2)

  void validate() const;
};

/// 1 / median(||x_i - x_j||^2) over distinct pairs of a deterministic row
/// subsample of at most `max_rows` rows.
double median_heuristic_gamma(const Eigen::Ref<const Matrix>& X, std::size_t max_rows = 512,
                              std::uint64_t seed = 0);

/// n x n Gram matrix. Symmetric by construction; RBF diagonal is exactly 1.
ColMatrix gram(const Eigen::Ref<const Matrix>& X, const KernelSpec& spec);

/// Cross kernel: rows of A against rows of B.
ColMatrix cross_gram(const Eigen::Ref<const Matrix>& A, const Eigen::Ref<const Matrix>& B,
                     const KernelSpec& spec);

/// Solution of (K + lambda I) alpha = Y, one column of alpha per target column.
struct KernelSystem {
  ColMatrix alpha;
  double ridge_lambda = 0.0;
  double jitter_used = 0.0;
  /// Per column: sqrt(alpha^T K alpha).
  std::vector<double> rkhs_norm;
  /// ||(K + lambda I + jitter I) alpha - Y||_inf
  double residual_inf = 0.0;

  /// Binary format: one text header line, then little-endian float64 alpha
  /// in column-major order.
  void save(const std::filesystem::path& path) const;
  static KernelSystem load(const std::filesystem::path& path);
};

struct SolveOptions {
  int jitter_doublings = 8;
};

/// Cholesky solve of (K + lambda I) alpha = Y. When the factorization fails at
/// lambda = 0, retries with jitter 1e-10 * trace(K) / n, doubling up to
/// `jitter_doublings` times. Throws NumericError (with a condition estimate)
/// when every attempt fails.
KernelSystem solve_interpolation(const ColMatrix& K, const ColMatrix& Y, double ridge_lambda,
                                 const SolveOptions& options = {});
KernelSystem solve_interpolation(const ColMatrix& K, const Vector& y, double ridge_lambda,
                                 const SolveOptions& options = {});

/// k(X_new, X_train) * alpha: one row per new point, one column per target.
ColMatrix predict(const KernelSystem& system, const Eigen::Ref<const Matrix>& X_train,
                  const KernelSpec& spec, const Eigen::Ref<const Matrix>& X_new);

/// One-hot targets (n x K) from class labels.
ColMatrix one_hot(std::span<const int> labels, int num_classes);
/// Row-wise argmax, ties to the smallest index.
std::vector<int> argmax_rows(const ColMatrix& scores);
/// Fraction of mismatches.
double classification_error(std::span<const int> predicted, std::span<const int> truth);

struct MinNormSolution {
  Vector w;
  double norm = 0.0;
  Vector alpha;  // w = X^T alpha
};

/// w = X^T alpha with X X^T alpha = y. Throws ValidationError when X's rows
/// are linearly dependent (Cholesky of X X^T fails without jitter).
MinNormSolution min_norm_linear(const Eigen::Ref<const Matrix>& X, const Vector& y);

/// Step size as a function of the 0-based step index.
using StepSchedule = std::function<double(std::size_t)>;

StepSchedule constant_step(double eta);
/// eta0 / (1 + t / decay_steps)
StepSchedule inverse_time_step(double eta0, double decay_steps);

struct LinearSnapshot {
  std::size_t step = 0;
  double step_size = 0.0;
  double span_residual = 0.0;      // ||(I - P_rowspace) w||
  double dist_to_min_norm = 0.0;   // ||w - w_min||
  double train_residual = 0.0;     // ||X w - y||_inf
  Vector w;
};

struct LinearTrace {
  std::vector<LinearSnapshot> snapshots;
  Vector final_w;
  Vector min_norm_w;

  /// CSV with header step,span_residual,dist_to_min_norm.
  std::string to_csv() const;
};

struct SgdLinearOptions {
  std::size_t steps = 1000;
  std::size_t snapshot_every = 100;
  std::uint64_t seed = 0;
  bool keep_weights = false;  // store w in every snapshot
};

/// SGD on 1/2 (w^T x_i - y_i)^2 from w_0 = 0 with uniformly sampled i:
///   w <- w - eta_t * e_t * x_i,  e_t = w^T x_i - y_i.
/// Snapshots at step 0, every `snapshot_every` steps and at the end. Throws
/// NumericError when ||w|| exceeds 1e12, naming the step.
LinearTrace sgd_linear_train(const Eigen::Ref<const Matrix>& X, const Vector& y,
                             const StepSchedule& schedule, const SgdLinearOptions& options);

struct HessianReport {
  Vector beta;     // per-sample curvature of the loss in its first argument
  ColMatrix H;     // (1/n) X^T diag(beta) X
  /// Max elementwise |H(w_a) - H(w_b)| across the evaluation points.
  double max_difference = 0.0;
  double min_eigenvalue = 0.0;
};

enum class LossKind { Squared };

/// Hessian of (1/n) sum_i loss(w^T x_i, y_i) for squared loss (z - y)^2,
/// evaluated independently at every point of `w_eval` (at least one).
HessianReport hessian_linear(const Eigen::Ref<const Matrix>& X, const Vector& y, LossKind loss,
                             std::span<const Vector> w_eval);

/// Phi = max(0, X W + b), W_ij ~ N(0, scale^2 / d), b_j ~ N(0, scale^2).
Matrix random_relu_features(const Eigen::Ref<const Matrix>& X, std::size_t m, double scale,
                            std::uint64_t seed);

/// Row-space projector basis: orthonormal columns spanning the rows of X.
ColMatrix row_space_basis(const Eigen::Ref<const Matrix>& X);

}  // namespace memcap
