#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memcap/data.hpp"
#include "memcap/net.hpp"

namespace memcap {

// -- empirical Rademacher complexity ---------------------------------------

/// Fits one sign assignment. Receives the inputs and sigma in {-1, +1}^n and
/// returns real predictions h(x_i); the estimator scores sign(h) with
/// sign(0) = +1.
using SignFitter =
    std::function<std::vector<double>(const Matrix& inputs, std::span<const int> sigma, std::size_t trial)>;

struct RademacherEstimate {
  std::size_t n = 0;
  std::vector<double> correlations;  // (1/n) sum_i sigma_i sign(h(x_i)), one per trial
  double mean = 0.0;
  double std_error = 0.0;
  std::string family;
  /// Trained fits only certify a lower bound on the supremum over the class.
  bool lower_bound = true;
};

RademacherEstimate rademacher_estimate(const Matrix& inputs, const SignFitter& fitter,
                                       std::size_t trials, std::uint64_t seed, std::string family);

/// Trains an MLP per trial on the sign targets. spec.num_classes must be 1
/// (scalar head, squared loss on +-1) or 2 (softmax; h = logit_1 - logit_0).
RademacherEstimate rademacher_estimate(const Dataset& ds, const MlpSpec& spec, const TrainConfig& cfg,
                                       std::size_t trials);

/// The two-element family {h = +1, h = -1}; its supremum is found exhaustively.
SignFitter constant_family_fitter();

// -- corruption sweep -------------------------------------------------------

struct SweepRow {
  double p = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> steps_to_fit;
  std::optional<double> rel_convergence;  // steps_to_fit(p) / steps_to_fit(0), same seed
  double train_acc = 0.0;
  double test_err = 0.0;
  bool fit = false;
  double effective_flip_rate = 0.0;
  std::size_t epochs_run = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // grid order: p outer, seed inner
  std::vector<double> p_grid;
  std::vector<std::uint64_t> seeds;
  std::string model;
  double fit_threshold = 0.0;

  /// Mean steps_to_fit per grid point over the seeds that fit.
  std::vector<double> mean_steps_by_p() const;
  /// Mean test error per grid point.
  std::vector<double> mean_test_err_by_p() const;
};

struct SweepOptions {
  std::size_t jobs = 1;
  /// Called after every finished cell (from worker threads, serialized).
  std::function<void(const SweepRow&)> on_cell;
};

/// For each (p, seed): corrupt the training labels, train from a fresh
/// initialization, evaluate on the untouched test set. Cells run on a pool of
/// `options.jobs` threads; results come back in grid order.
/// p_grid must be nonempty, sorted, within [0, 1] and contain 0.
SweepReport corruption_sweep(const Dataset& train, const Dataset& test, const MlpSpec& spec,
                             const TrainConfig& cfg, std::span<const double> p_grid,
                             std::span<const std::uint64_t> seeds, const SweepOptions& options = {});

/// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace memcap
